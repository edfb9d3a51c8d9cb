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

#ifndef REMFORGE_GEO_HPP
#define REMFORGE_GEO_HPP

#include "core.hpp"

#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace remforge::geo {

inline constexpr double story_height_m = 3.3;
inline constexpr int min_stories = 2;
inline constexpr int max_stories = 6;
inline constexpr double max_building_height_m = 19.8;
inline constexpr double tx_min_building_height_m = 16.5;
inline constexpr double tx_mast_height_m = 3.0;
inline constexpr double default_rx_height_m = 1.5;

// Building height for a story count, produced from integer decimeters so that the
// 16-bit decimeter raster round-trips bit-exactly.
inline double height_for_stories(int stories)
{
    return static_cast<double>(33 * stories) / 10.0;
}

// Returns the story count (2..6) for a valid building height, 0 for ground and -1 otherwise.
inline int stories_for_height(double h)
{
    if (h == 0.0)
        return 0;
    for (int s = min_stories; s <= max_stories; ++s)
        if (std::abs(h - height_for_stories(s)) < 1e-9)
            return s;
    return -1;
}

// 2D grid of building heights in meters, one pixel per square meter. Ground is 0.0;
// every other pixel holds a story-quantized height in [6.6, 19.8].
class CityMap
{
public:
    CityMap() = default;

    explicit CityMap(Grid<double> heights) : heights_(std::move(heights))
    {
        require(heights_.width() > 0 && heights_.height() > 0, "city map must be non-empty");
        for (double &h : heights_) {
            const int s = stories_for_height(h);
            require(s >= 0, "building height " + std::to_string(h) + " m is not a 2..6 story multiple of 3.3 m",
                    "out_of_range");
            h = s == 0 ? 0.0 : height_for_stories(s);
        }
    }

    static CityMap empty(std::size_t side) { return CityMap(Grid<double>(side, side, 0.0)); }

    std::size_t width() const noexcept { return heights_.width(); }
    std::size_t height() const noexcept { return heights_.height(); }
    bool square() const noexcept { return width() == height(); }

    double operator()(std::size_t x, std::size_t y) const { return heights_(x, y); }
    bool contains(long x, long y) const noexcept { return heights_.contains(x, y); }
    bool is_building(std::size_t x, std::size_t y) const { return heights_(x, y) > 0.0; }

    const Grid<double> &heights() const noexcept { return heights_; }

    friend bool operator==(const CityMap &, const CityMap &) = default;

private:
    Grid<double> heights_;
};

struct TxSite
{
    long x = 0;
    long y = 0;
    double z = 0.0; // meters above ground

    friend bool operator==(const TxSite &, const TxSite &) = default;
};

struct MapBundle
{
    CityMap map;
    std::vector<TxSite> transmitters;
    std::string map_id;

    friend bool operator==(const MapBundle &, const MapBundle &) = default;
};

inline double building_density(const CityMap &map)
{
    const auto &h = map.heights();
    const auto n = std::count_if(h.begin(), h.end(), [](double v) { return v > 0.0; });
    return static_cast<double>(n) / static_cast<double>(h.size());
}

inline Grid<std::uint8_t> binary_mask(const CityMap &map)
{
    Grid<std::uint8_t> out(map.width(), map.height(), 0);
    std::transform(map.heights().begin(), map.heights().end(), out.begin(),
                   [](double h) { return static_cast<std::uint8_t>(h > 0.0 ? 1 : 0); });
    return out;
}

// Bh as the dataset stores it: ground 0, buildings uniformly quantized into [1, 255].
inline std::uint8_t height_gray(double h)
{
    if (h <= 0.0)
        return 0;
    const long v = round_half_away(255.0 * h / max_building_height_m);
    return static_cast<std::uint8_t>(std::clamp(v, 1L, 255L));
}

inline Grid<std::uint8_t> height_image(const CityMap &map)
{
    Grid<std::uint8_t> out(map.width(), map.height(), 0);
    std::transform(map.heights().begin(), map.heights().end(), out.begin(), height_gray);
    return out;
}

// Centre window in which transmitters may be placed: 150/256 of the map side.
struct Window
{
    long lo = 0;
    long hi = 0; // exclusive

    bool contains(long v) const noexcept { return v >= lo && v < hi; }
};

inline Window tx_window(std::size_t side)
{
    const long w = round_half_away(150.0 * static_cast<double>(side) / 256.0);
    const long lo = (static_cast<long>(side) - w) / 2;
    return {lo, lo + w};
}

// Pixel on the outline of a building: a building pixel with a 4-neighbour that is
// ground or lies outside the map.
inline bool is_edge_pixel(const CityMap &map, long x, long y)
{
    if (!map.contains(x, y) || !map.is_building(x, y))
        return false;
    constexpr long dx[] = {1, -1, 0, 0};
    constexpr long dy[] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
        const long nx = x + dx[k], ny = y + dy[k];
        if (!map.contains(nx, ny) || !map.is_building(nx, ny))
            return true;
    }
    return false;
}

// Transmitter eligibility: an outline pixel of a building at least 16.5 m tall inside the
// centre window, with the antenna 3 m above the rooftop.
inline bool is_eligible_site(const CityMap &map, const TxSite &tx)
{
    const Window wx = tx_window(map.width()), wy = tx_window(map.height());
    if (!wx.contains(tx.x) || !wy.contains(tx.y) || !is_edge_pixel(map, tx.x, tx.y))
        return false;
    const double roof = map(tx.x, tx.y);
    return roof >= tx_min_building_height_m - 1e-9 && std::abs(tx.z - (roof + tx_mast_height_m)) < 1e-9;
}

inline bool is_valid_site(const CityMap &map, const TxSite &tx)
{
    return map.contains(tx.x, tx.y) && map.is_building(tx.x, tx.y) && tx.z > map(tx.x, tx.y);
}

inline std::vector<TxSite> eligible_sites(const CityMap &map)
{
    std::vector<TxSite> out;
    const Window wx = tx_window(map.width()), wy = tx_window(map.height());
    for (long y = wy.lo; y < wy.hi; ++y)
        for (long x = wx.lo; x < wx.hi; ++x) {
            if (!map.contains(x, y) || !is_edge_pixel(map, x, y))
                continue;
            const double roof = map(x, y);
            if (roof >= tx_min_building_height_m - 1e-9)
                out.push_back({x, y, roof + tx_mast_height_m});
        }
    return out;
}

inline std::vector<TxSite> place_transmitters(const CityMap &map, std::size_t count, std::uint64_t seed)
{
    std::vector<TxSite> sites = eligible_sites(map);
    require(!sites.empty(), "map has no building of at least 16.5 m inside the centre window", "no_eligible_building");
    require(count <= sites.size(),
            "requested " + std::to_string(count) + " transmitters but only " + std::to_string(sites.size()) +
                " eligible sites exist",
            "no_eligible_building");
    std::mt19937_64 rng(seed);
    // partial Fisher-Yates; the sites vector is in raster order so the draw is reproducible
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, sites.size() - 1);
        std::swap(sites[i], sites[pick(rng)]);
    }
    sites.resize(count);
    return sites;
}

namespace detail {

struct Lot
{
    long x0, y0, x1, y1; // half-open
    long w() const { return x1 - x0; }
    long h() const { return y1 - y0; }
};

// Recursive binary space partition into rectangular lots separated by one-pixel streets.
inline void split_lots(const Lot &lot, long max_side, std::mt19937_64 &rng, std::vector<Lot> &out)
{
    constexpr long min_side = 2;
    const bool split_x = lot.w() >= lot.h();
    const long len = split_x ? lot.w() : lot.h();
    if (len <= max_side) {
        if (lot.w() >= min_side && lot.h() >= min_side)
            out.push_back(lot);
        return;
    }
    // cut position leaves at least min_side on each side of the street
    std::uniform_int_distribution<long> cut(min_side, len - min_side - 1);
    const long c = cut(rng);
    if (split_x) {
        split_lots({lot.x0, lot.y0, lot.x0 + c, lot.y1}, max_side, rng, out);
        split_lots({lot.x0 + c + 1, lot.y0, lot.x1, lot.y1}, max_side, rng, out);
    } else {
        split_lots({lot.x0, lot.y0, lot.x1, lot.y0 + c}, max_side, rng, out);
        split_lots({lot.x0, lot.y0 + c + 1, lot.x1, lot.y1}, max_side, rng, out);
    }
}

} // namespace detail

// Synthetic city: the map is cut into street-separated lots, lots are visited in a
// seeded random order and built up until the target density is reached. Building
// heights are drawn uniformly from 2..6 stories per building.
inline CityMap generate_city(std::uint64_t seed, std::size_t size, double target_density)
{
    require(size >= 8, "map side must be at least 8 pixels");
    require(target_density > 0.0 && target_density < 0.6, "target density must lie in (0, 0.6)");
    constexpr double tolerance = 0.05;
    constexpr int max_attempts = 16;
    const double total = static_cast<double>(size * size);

    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(attempt));
        const long max_side = std::max<long>(4, static_cast<long>(size) / 6);
        std::vector<detail::Lot> lots;
        // outer border is street as well, so the city never touches the map edge
        detail::split_lots({1, 1, static_cast<long>(size) - 1, static_cast<long>(size) - 1}, max_side, rng, lots);
        std::vector<std::size_t> order(lots.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);

        Grid<double> heights(size, size, 0.0);
        std::uniform_int_distribution<int> stories(min_stories, max_stories);
        double built = 0.0;
        for (std::size_t idx : order) {
            const auto &lot = lots[idx];
            const double area = static_cast<double>(lot.w() * lot.h());
            if ((built + area) / total > target_density + tolerance * 0.5)
                continue;
            const double h = height_for_stories(stories(rng));
            for (long y = lot.y0; y < lot.y1; ++y)
                for (long x = lot.x0; x < lot.x1; ++x)
                    heights(x, y) = h;
            built += area;
            if (built / total >= target_density)
                break;
        }
        if (std::abs(built / total - target_density) <= tolerance)
            return CityMap(std::move(heights));
    }
    throw Error("unsatisfiable", "could not reach building density " + std::to_string(target_density) +
                                     " on a " + std::to_string(size) + " pixel map");
}

// City plus transmitters. Layouts without enough eligible rooftops are redrawn from a
// derived seed, up to a bounded number of times.
inline MapBundle generate_bundle(std::uint64_t seed, std::size_t size, double target_density, std::size_t tx_count,
                                 std::string map_id)
{
    constexpr std::uint64_t max_redraws = 64;
    for (std::uint64_t k = 0; k < max_redraws; ++k) {
        const std::uint64_t s = seed + k * 1000003ULL;
        CityMap map = generate_city(s, size, target_density);
        if (eligible_sites(map).size() < tx_count)
            continue;
        auto sites = place_transmitters(map, tx_count, s ^ 0x7A11ULL);
        return {std::move(map), std::move(sites), std::move(map_id)};
    }
    throw Error("no_eligible_building", "no layout with " + std::to_string(tx_count) +
                                            " eligible transmitter sites after " + std::to_string(max_redraws) +
                                            " redraws");
}

} // namespace remforge::geo

#endif
