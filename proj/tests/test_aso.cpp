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

#include "remforge/aso.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace remforge;
namespace rt = remforge::testing;

namespace {

const geo::MapBundle &city()
{
    static const auto b = geo::generate_bundle(77, 64, 0.3, 20, "aso");
    return b;
}

} // namespace

TEST(Network, SplitIsAPartitionAndDeterministic)
{
    const auto net = aso::make_network(city().map, city().transmitters, 4, 3);
    EXPECT_EQ(net.sleep.size(), 4u);
    EXPECT_EQ(net.active.size(), 16u);
    std::vector<std::size_t> all = net.active;
    all.insert(all.end(), net.sleep.begin(), net.sleep.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i)
        EXPECT_EQ(all[i], i);
    EXPECT_EQ(net.sleep, aso::make_network(city().map, city().transmitters, 4, 3).sleep);
    EXPECT_THROW(aso::make_network(city().map, city().transmitters, 20, 3), Error);
    auto bad = net;
    bad.sleep.push_back(bad.active.front());
    EXPECT_THROW(bad.validate(), Error);
}

TEST(Select, HighestGainFirstTiesByIndex)
{
    auto net = aso::make_network(city().map, city().transmitters, 4, 3);
    aso::RemSet rems;
    const double gains[] = {-90.0, -80.0, -90.0, -100.0};
    for (std::size_t i = 0; i < 4; ++i)
        rems.emplace(net.sleep[i], propagation::RadioMap(64, 64, gains[i]));
    EXPECT_EQ(aso::mpl_aso_select(net, {5, 5, 1}, rems), (std::vector<std::size_t>{net.sleep[1]}));
    EXPECT_EQ(aso::mpl_aso_select(net, {5, 5, 3}, rems),
              (std::vector<std::size_t>{net.sleep[1], net.sleep[0], net.sleep[2]}));
    EXPECT_THROW(aso::mpl_aso_select(net, {5, 5, 5}, rems), Error);
    EXPECT_THROW(aso::mpl_aso_select(net, {5, 5, 0}, rems), Error);
    EXPECT_THROW(aso::mpl_aso_select(net, {64, 5, 1}, rems), Error);
    rems.erase(net.sleep[0]);
    EXPECT_THROW(aso::mpl_aso_select(net, {5, 5, 1}, rems), Error);
}

TEST(Select, RandomBaselineValues)
{
    EXPECT_DOUBLE_EQ(aso::random_selection_error(4, 1), 75.0);
    EXPECT_DOUBLE_EQ(aso::random_selection_error(4, 2), 100.0 * (1.0 - 1.0 / 6.0));
    EXPECT_DOUBLE_EQ(aso::random_selection_error(4, 3), 75.0);
    EXPECT_DOUBLE_EQ(aso::random_selection_error(4, 4), 0.0);
    EXPECT_DOUBLE_EQ(aso::binomial(20, 3), 1140.0);
    EXPECT_THROW(aso::random_selection_error(4, 0), Error);
}

TEST(Select, TruthAsPredictionHasZeroError)
{
    const auto net = aso::make_network(city().map, city().transmitters, 4, 9);
    const auto truth = aso::true_rems(net, net.sleep, {});
    const auto r = aso::selection_errors(net, {1, 2, 3}, truth, truth, aso::outdoor_locations(net.map));
    for (const auto &k : r)
        EXPECT_EQ(k.error_pct, 0.0) << "k=" << k.k;
}

TEST(Select, InvariantUnderMonotoneRescaling)
{
    std::mt19937_64 rng(12);
    const auto small = geo::generate_bundle(5, 32, 0.3, 6, "s");
    for (int trial = 0; trial < 25; ++trial)
        EXPECT_TRUE(rt::monotone_rescaling_trial(rng, small)) << "trial " << trial;
}

TEST(Select, ErrorIsBoundedAndWorseForScrambledPredictions)
{
    const auto net = aso::make_network(city().map, city().transmitters, 4, 9);
    const auto truth = aso::true_rems(net, net.sleep, {});
    // swap the REMs of two sleep APs: selections now mostly pick the wrong AP
    auto swapped = truth;
    std::swap(swapped.at(net.sleep[0]), swapped.at(net.sleep[1]));
    const auto r = aso::selection_errors(net, {1}, swapped, truth, aso::outdoor_locations(net.map));
    EXPECT_GT(r[0].error_pct, 0.0);
    EXPECT_LE(r[0].error_pct, 100.0);
}

TEST(Evaluate, ScatteredModeSmoke)
{
    const auto b = geo::generate_bundle(21, 16, 0.3, 6, "e");
    const auto net = aso::make_network(b.map, b.transmitters, 2, 1);
    pipeline::TrainConfig cfg;
    cfg.epochs = 1;
    cfg.depth = 1;
    cfg.base_channels = 2;
    cfg.lr = 1e-3;
    const aso::TrainingMode mode{aso::TrainingMode::Kind::scattered, 0.3, 4};
    const auto rep = aso::evaluate_aso(net, {1, 2}, pipeline::parse_spec("M(DAug, PxLoS_f, Unet, MSE)"), cfg, mode);
    ASSERT_EQ(rep.results.size(), 2u);
    EXPECT_EQ(rep.results[0].locations, pipeline::random_outdoor_mask(b.map, 0.3, 4).pixels.size());
    EXPECT_EQ(rep.mode, "scattered(0.3)");
    EXPECT_EQ(rep.active, 4u);
    const auto csv = aso::to_csv(rep);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
