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

#ifndef REMFORGE_PROPAGATION_HPP
#define REMFORGE_PROPAGATION_HPP

#include "core.hpp"
#include "geo.hpp"
#include "los.hpp"

#include <cstdint>

namespace remforge::propagation {

inline constexpr double min_gain_db = -111.0;
inline constexpr double max_gain_db = -75.0;
inline constexpr double gain_span_db = max_gain_db - min_gain_db; // 36 dB

// Per-pixel path gain in dB, always inside [-111, -75].
using RadioMap = Grid<double>;

// Knobs of the synthetic log-distance + blockage oracle. This is a desk-scale stand-in
// for ray-traced ground truth, not a physical channel model.
struct PropagationParams
{
    double reference_gain_db = -45.0; // gain at 1 m
    double pathloss_exponent = 2.5;
    double blockage_penalty_db = 2.0; // per meter of ray inside buildings
    double rx_height = geo::default_rx_height_m;
    double samples_per_meter = 8.0;

    void validate() const
    {
        require(pathloss_exponent > 0.0, "pathloss exponent must be positive");
        require(blockage_penalty_db >= 0.0, "blockage penalty must be non-negative");
        require(samples_per_meter > 0.0, "samples_per_meter must be positive");
    }
};

inline double clamp_gain(double g) { return std::clamp(g, min_gain_db, max_gain_db); }

// 3D distance from the transmitter to the receiver at the centre of pixel (x, y).
inline double tx_distance(const geo::TxSite &tx, long x, long y, double rx_height)
{
    const double dx = static_cast<double>(x - tx.x), dy = static_cast<double>(y - tx.y), dz = tx.z - rx_height;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Distance-only part of the oracle, clamped. Also serves as the analytic baseline
// predictor in evaluations.
inline double free_space_gain(const PropagationParams &p, double distance)
{
    return clamp_gain(p.reference_gain_db - 10.0 * p.pathloss_exponent * std::log10(std::max(distance, 1.0)));
}

inline RadioMap distance_only_rem(const geo::CityMap &map, const geo::TxSite &tx, const PropagationParams &p)
{
    p.validate();
    RadioMap out(map.width(), map.height());
    for (std::size_t y = 0; y < map.height(); ++y)
        for (std::size_t x = 0; x < map.width(); ++x)
            out(x, y) = free_space_gain(p, tx_distance(tx, static_cast<long>(x), static_cast<long>(y), p.rx_height));
    return out;
}

inline RadioMap oracle_rem(const geo::CityMap &map, const geo::TxSite &tx, const PropagationParams &p,
                           unsigned threads = 0)
{
    p.validate();
    require(map.contains(tx.x, tx.y) && tx.z >= map(tx.x, tx.y), "transmitter is not valid for this map");
    const Grid<double> blocked = los::blocked_length_map(map, tx, p.rx_height, p.samples_per_meter, threads);
    RadioMap out(map.width(), map.height());
    for (std::size_t y = 0; y < map.height(); ++y)
        for (std::size_t x = 0; x < map.width(); ++x) {
            const double d = tx_distance(tx, static_cast<long>(x), static_cast<long>(y), p.rx_height);
            out(x, y) = clamp_gain(p.reference_gain_db - 10.0 * p.pathloss_exponent * std::log10(std::max(d, 1.0)) -
                                   p.blockage_penalty_db * blocked(x, y));
        }
    return out;
}

inline std::uint8_t gain_to_gray(double g)
{
    require(g >= min_gain_db && g <= max_gain_db, "path gain " + std::to_string(g) + " dB outside [-111, -75]",
            "out_of_range");
    return static_cast<std::uint8_t>(round_half_away(255.0 * (g - min_gain_db) / gain_span_db));
}

inline double gray_to_gain(int v)
{
    require(v >= 0 && v <= 255, "gray level outside [0, 255]", "out_of_range");
    return min_gain_db + gain_span_db * static_cast<double>(v) / 255.0;
}

inline double normalize_gain(double g) { return (g - min_gain_db) / gain_span_db; }
inline double denormalize_gain(double v) { return min_gain_db + gain_span_db * v; }

inline Grid<double> normalize(const RadioMap &rem)
{
    Grid<double> out(rem.width(), rem.height());
    std::transform(rem.begin(), rem.end(), out.begin(), normalize_gain);
    return out;
}

inline Grid<std::uint8_t> to_gray(const RadioMap &rem)
{
    Grid<std::uint8_t> out(rem.width(), rem.height());
    std::transform(rem.begin(), rem.end(), out.begin(), gain_to_gray);
    return out;
}

inline RadioMap from_gray(const Grid<std::uint8_t> &img)
{
    RadioMap out(img.width(), img.height());
    std::transform(img.begin(), img.end(), out.begin(), [](std::uint8_t v) { return gray_to_gain(v); });
    return out;
}

} // namespace remforge::propagation

#endif
