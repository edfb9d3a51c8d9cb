// SPDX-License-Identifier: Apache-2.0
//
// remforge: radio environment map prediction toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "remforge/propagation.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace remforge;
namespace prop = remforge::propagation;

TEST(Propagation, GrayCodecRoundTripsAllLevels)
{
    for (int v = 0; v <= 255; ++v)
        EXPECT_EQ(prop::gain_to_gray(prop::gray_to_gain(v)), v);
    EXPECT_DOUBLE_EQ(prop::gray_to_gain(0), -111.0);
    EXPECT_DOUBLE_EQ(prop::gray_to_gain(255), -75.0);
    EXPECT_THROW(prop::gain_to_gray(-74.0), Error);
    EXPECT_THROW(prop::gain_to_gray(-112.0), Error);
    EXPECT_THROW(prop::gray_to_gain(256), Error);
}

TEST(Propagation, NormalizationIsAffineOverThe36dBSpan)
{
    EXPECT_DOUBLE_EQ(prop::gain_span_db, 36.0);
    EXPECT_DOUBLE_EQ(prop::normalize_gain(-111.0), 0.0);
    EXPECT_DOUBLE_EQ(prop::normalize_gain(-75.0), 1.0);
    EXPECT_DOUBLE_EQ(prop::normalize_gain(-93.0), 0.5);
    for (double g = -111.0; g <= -75.0; g += 0.37)
        EXPECT_NEAR(prop::denormalize_gain(prop::normalize_gain(g)), g, 1e-12);
}

TEST(Propagation, FreeSpaceGainValues)
{
    prop::PropagationParams p; // -45 dB at 1 m, exponent 2.5
    EXPECT_DOUBLE_EQ(prop::free_space_gain(p, 100.0), -95.0);
    EXPECT_DOUBLE_EQ(prop::free_space_gain(p, 10.0), -75.0);  // -70 clamped
    EXPECT_DOUBLE_EQ(prop::free_space_gain(p, 1e6), -111.0);  // -195 clamped
    EXPECT_DOUBLE_EQ(prop::free_space_gain(p, 0.2), -75.0);
}

TEST(Propagation, EmptyMapOracleEqualsDistanceOnly)
{
    const auto m = geo::CityMap::empty(24);
    const geo::TxSite tx{12, 7, 20.0};
    prop::PropagationParams p;
    EXPECT_EQ(prop::oracle_rem(m, tx, p), prop::distance_only_rem(m, tx, p));
}

TEST(Propagation, BlockageNeverRaisesGainAndStaysInRange)
{
    prop::PropagationParams p;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto b = geo::generate_bundle(seed, 48, 0.3, 2, "m");
        for (const auto &tx : b.transmitters) {
            const auto o = prop::oracle_rem(b.map, tx, p);
            const auto d = prop::distance_only_rem(b.map, tx, p);
            for (std::size_t i = 0; i < o.size(); ++i) {
                EXPECT_LE(o.data()[i], d.data()[i]);
                EXPECT_GE(o.data()[i], prop::min_gain_db);
                EXPECT_LE(o.data()[i], prop::max_gain_db);
            }
        }
    }
}

TEST(Propagation, OracleAppliesPenaltyPerBlockedMeter)
{
    // penalty dB per meter of blocked ray, checked on an unclamped pixel
    const auto b = geo::generate_bundle(11, 48, 0.35, 1, "m");
    const auto &tx = b.transmitters[0];
    const prop::PropagationParams q;
    const auto blocked = los::blocked_length_map(b.map, tx, q.rx_height, q.samples_per_meter);
    const auto rem = prop::oracle_rem(b.map, tx, q);
    std::size_t checked = 0;
    for (std::size_t y = 0; y < 48; ++y)
        for (std::size_t x = 0; x < 48; ++x) {
            const double d = prop::tx_distance(tx, static_cast<long>(x), static_cast<long>(y), q.rx_height);
            const double raw = -45.0 - 25.0 * std::log10(std::max(d, 1.0)) - 2.0 * blocked(x, y);
            if (raw > -111.0 && raw < -75.0) {
                EXPECT_NEAR(rem(x, y), raw, 1e-9);
                ++checked;
            }
        }
    EXPECT_GT(checked, 100u);
}

TEST(Propagation, InvalidParametersAreRejected)
{
    prop::PropagationParams p;
    p.blockage_penalty_db = -1.0;
    EXPECT_THROW(p.validate(), Error);
    const auto m = geo::CityMap::empty(8);
    EXPECT_THROW(prop::oracle_rem(m, {9, 0, 10.0}, {}), Error);
}
