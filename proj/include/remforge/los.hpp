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

// Fractional line-of-sight maps.
//
// A LoS map holds, for every receiver pixel, a value in [0, 1] describing how clear the
// straight path to the transmitter is: 1.0 is fully unobstructed, 0.0 fully blocked.
//
//   pxlos    - per-pixel 2D Bresenham traversal with an interpolated ray height
//   ablos    - batched 3D traversal with a common step count for every pixel
//   voxel_ray_oracle - brute-force fine sampling of the exact 3D segment

#ifndef REMFORGE_LOS_HPP
#define REMFORGE_LOS_HPP

#include "core.hpp"
#include "geo.hpp"

#include <cstdint>
#include <cstdlib>
#include <vector>

#if defined(__AVX2__)
#include <immintrin.h>
#endif

namespace remforge::los {

using LosMap = Grid<double>;

// Calls visit(i, x, y) for every pixel of the Bresenham line from (x0, y0) to (x1, y1),
// both endpoints included, stepping one pixel at a time along the dominant axis
// (x on ties). i is the step index along that axis; returns the step count N, so the
// line has N + 1 pixels. The minor coordinate at step i is the minor start offset by
// i * d_minor / N rounded half away from zero.
template <typename Visit>
long bresenham(long x0, long y0, long x1, long y1, Visit &&visit)
{
    const long adx = std::labs(x1 - x0), ady = std::labs(y1 - y0);
    const long sx = x1 >= x0 ? 1 : -1, sy = y1 >= y0 ? 1 : -1;
    const bool x_major = adx >= ady;
    const long n = x_major ? adx : ady;     // steps along the driving axis
    const long minor = x_major ? ady : adx; // total minor displacement
    long x = x0, y = y0;
    // err tracks 2*i*minor + n - 2*n*offset; a minor step happens when it reaches 2n
    long err = n;
    for (long i = 0;; ++i) {
        visit(i, x, y);
        if (i == n)
            break;
        err += 2 * minor;
        if (x_major) {
            x += sx;
            if (err >= 2 * n) {
                y += sy;
                err -= 2 * n;
            }
        } else {
            y += sy;
            if (err >= 2 * n) {
                x += sx;
                err -= 2 * n;
            }
        }
    }
    return n;
}

// LoS value of a single receiver pixel by the per-pixel method. Samples are the
// Bresenham pixels from the receiver to the transmitter; at step i of N the ray height
// is z_rx + (z_tx - z_rx) * i / N and the sample is obstructed iff the building height
// there is >= the ray height. Result is 1 - obstructed / samples.
inline double pxlos_pixel(const geo::CityMap &map, const geo::TxSite &tx, long x, long y, double rx_height)
{
    if (x == tx.x && y == tx.y)
        return 1.0;
    const double dz = tx.z - rx_height;
    long blocked = 0, samples = 0;
    const long n = std::max(std::labs(tx.x - x), std::labs(tx.y - y));
    bresenham(x, y, tx.x, tx.y, [&](long i, long px, long py) {
        const double z = rx_height + dz * static_cast<double>(i) / static_cast<double>(n);
        ++samples;
        if (map(px, py) >= z)
            ++blocked;
    });
    return 1.0 - static_cast<double>(blocked) / static_cast<double>(samples);
}

inline LosMap pxlos(const geo::CityMap &map, const geo::TxSite &tx, double rx_height = geo::default_rx_height_m,
                    unsigned threads = 0)
{
    require(map.contains(tx.x, tx.y), "transmitter outside the map");
    LosMap out(map.width(), map.height(), 0.0);
    const std::size_t w = map.width();
    parallel_for(
        map.height(),
        [&](std::size_t y) {
            for (std::size_t x = 0; x < w; ++x)
                out(x, y) = pxlos_pixel(map, tx, static_cast<long>(x), static_cast<long>(y), rx_height);
        },
        threads);
    return out;
}

// Batched approximate LoS. Every receiver starts at ground level (z = 0) and walks a 3D
// Bresenham line toward the transmitter cell (x_t, y_t, round(z_t)): one cell per step
// along its own driving axis, the other two axes advancing by the rounded
// slope-proportional amount. A cell is counted when its column holds a building whose
// height reaches the cell's z index. All lines are normalized by the same step count D,
// the largest per-axis displacement over the whole batch, and the value is
// clamp(1 - count / D, 0, 1). Lines shorter than D stop at the transmitter; the cells
// beyond it lie above every roof and would never be counted.
//
// Each pixel is an independent integer walk, so the map is a plain data-parallel map over
// pixels. With AVX2 available, eight neighbouring pixels of a row walk in lock step in
// vector lanes; lanes whose line has ended are masked. Both paths give identical counts.
namespace detail {

struct AbLosFrame
{
    std::vector<std::int32_t> top; // highest blocked z index per column, -1 for open ground
    long w = 0, h = 0, zt = 0, d = 1;
};

inline double ablos_value(long count, long d)
{
    return std::clamp(1.0 - static_cast<double>(count) / static_cast<double>(d), 0.0, 1.0);
}

inline void ablos_row_scalar(const AbLosFrame &f, const geo::TxSite &tx, long y, LosMap &out)
{
    const long w = f.w, zt = f.zt;
    const long ay = std::labs(tx.y - y), sy = tx.y >= y ? w : -w;
    for (long x = 0; x < w; ++x) {
        const long ax = std::labs(tx.x - x), sx = tx.x >= x ? 1 : -1;
        const long len = std::max({ax, ay, zt}), len2 = 2 * len;
        long ex = len, ey = len, ez = len, cz = 0, count = 0;
        const std::int32_t *cell = f.top.data() + (y * w + x);
        for (long s = 0;; ++s) {
            count += *cell >= cz;
            if (s == len)
                break;
            ex += 2 * ax;
            ey += 2 * ay;
            ez += 2 * zt;
            // branch-free steps: m is all ones when the axis advances
            const long mx = -static_cast<long>(ex >= len2);
            const long my = -static_cast<long>(ey >= len2);
            const long mz = -static_cast<long>(ez >= len2);
            ex -= len2 & mx;
            ey -= len2 & my;
            ez -= len2 & mz;
            cell += (sx & mx) + (sy & my);
            cz -= mz;
        }
        out(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = ablos_value(count, f.d);
    }
}

#if defined(__AVX2__)
inline void ablos_row_avx2(const AbLosFrame &f, const geo::TxSite &tx, long y, LosMap &out)
{
    const int w = static_cast<int>(f.w), zt = static_cast<int>(f.zt);
    const int ay = static_cast<int>(std::labs(tx.y - y));
    const __m256i one = _mm256_set1_epi32(1);
    const __m256i lane = _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7);
    const __m256i ay2 = _mm256_set1_epi32(2 * ay), zt2 = _mm256_set1_epi32(2 * zt);
    const __m256i sy = _mm256_set1_epi32(tx.y >= y ? w : -w);
    const __m256i last = _mm256_set1_epi32(w - 1);
    for (int x0 = 0; x0 < w; x0 += 8) {
        // lanes past the row end duplicate the last pixel and are discarded
        const __m256i xv = _mm256_min_epi32(_mm256_add_epi32(_mm256_set1_epi32(x0), lane), last);
        const __m256i dx = _mm256_sub_epi32(_mm256_set1_epi32(static_cast<int>(tx.x)), xv);
        const __m256i ax2 = _mm256_add_epi32(_mm256_abs_epi32(dx), _mm256_abs_epi32(dx));
        const __m256i sx = _mm256_or_si256(_mm256_srai_epi32(dx, 31), one);
        const __m256i len = _mm256_max_epi32(_mm256_abs_epi32(dx), _mm256_set1_epi32(std::max(ay, zt)));
        const __m256i len_p1 = _mm256_add_epi32(len, one);
        const __m256i l2 = _mm256_add_epi32(len, len), l2m = _mm256_sub_epi32(l2, one);
        __m256i ex = len, ey = len, ez = len, cz = _mm256_setzero_si256(), cnt = _mm256_setzero_si256();
        __m256i cell = _mm256_add_epi32(_mm256_set1_epi32(static_cast<int>(y) * w), xv);
        alignas(32) std::int32_t lens[8];
        _mm256_store_si256(reinterpret_cast<__m256i *>(lens), len);
        const int steps = *std::max_element(lens, lens + 8);
        for (int s = 0; s <= steps; ++s) {
            const __m256i sv = _mm256_set1_epi32(s);
            const __m256i live = _mm256_cmpgt_epi32(len_p1, sv);
            const __m256i t = _mm256_i32gather_epi32(f.top.data(), cell, 4);
            cnt = _mm256_sub_epi32(cnt, _mm256_andnot_si256(_mm256_cmpgt_epi32(cz, t), live));
            const __m256i adv = _mm256_cmpgt_epi32(len, sv);
            ex = _mm256_add_epi32(ex, ax2);
            ey = _mm256_add_epi32(ey, ay2);
            ez = _mm256_add_epi32(ez, zt2);
            const __m256i mx = _mm256_and_si256(_mm256_cmpgt_epi32(ex, l2m), adv);
            const __m256i my = _mm256_and_si256(_mm256_cmpgt_epi32(ey, l2m), adv);
            const __m256i mz = _mm256_and_si256(_mm256_cmpgt_epi32(ez, l2m), adv);
            ex = _mm256_sub_epi32(ex, _mm256_and_si256(l2, mx));
            ey = _mm256_sub_epi32(ey, _mm256_and_si256(l2, my));
            ez = _mm256_sub_epi32(ez, _mm256_and_si256(l2, mz));
            cell = _mm256_add_epi32(cell, _mm256_add_epi32(_mm256_and_si256(sx, mx), _mm256_and_si256(sy, my)));
            cz = _mm256_sub_epi32(cz, mz);
        }
        alignas(32) std::int32_t c[8];
        _mm256_store_si256(reinterpret_cast<__m256i *>(c), cnt);
        for (int i = 0; i < 8 && x0 + i < w; ++i)
            out(static_cast<std::size_t>(x0 + i), static_cast<std::size_t>(y)) = ablos_value(c[i], f.d);
    }
}
#endif

} // namespace detail

inline constexpr bool ablos_vectorized =
#if defined(__AVX2__)
    true;
#else
    false;
#endif

// force_scalar selects the portable per-pixel walk even when the vector path is built in.
inline LosMap ablos(const geo::CityMap &map, const geo::TxSite &tx, unsigned threads = 0, bool force_scalar = false)
{
    require(map.contains(tx.x, tx.y), "transmitter outside the map");
    require(map.width() * map.height() < (std::size_t{1} << 28), "map too large for ablos");
    detail::AbLosFrame f;
    f.w = static_cast<long>(map.width());
    f.h = static_cast<long>(map.height());
    f.zt = round_half_away(tx.z);
    require(f.zt >= 0, "transmitter below ground");
    f.d = std::max({tx.x, f.w - 1 - tx.x, tx.y, f.h - 1 - tx.y, f.zt, 1L});
    f.top.resize(map.heights().size());
    std::transform(map.heights().begin(), map.heights().end(), f.top.begin(),
                   [](double b) { return b > 0.0 ? static_cast<std::int32_t>(std::floor(b)) : -1; });

    LosMap out(map.width(), map.height(), 0.0);
    parallel_for(
        map.height(),
        [&](std::size_t row) {
            const long y = static_cast<long>(row);
#if defined(__AVX2__)
            if (!force_scalar) {
                detail::ablos_row_avx2(f, tx, y, out);
                return;
            }
#endif
            detail::ablos_row_scalar(f, tx, y, out);
        },
        threads);
    return out;
}

struct RayBlockage
{
    double blocked_length = 0.0; // meters
    double total_length = 0.0;   // meters

    double clear_fraction() const { return total_length > 0.0 ? 1.0 - blocked_length / total_length : 1.0; }
};

// Brute-force reference: the exact 3D segment from the receiver (pixel centre at
// rx_height) to the transmitter (its pixel centre at tx.z) is sampled at midpoints of
// ceil(length * samples_per_meter) equal pieces. A sample is blocked when it lies in a
// building column strictly below the roof.
inline RayBlockage voxel_ray_oracle(const geo::CityMap &map, const geo::TxSite &tx, long x, long y,
                                    double rx_height = geo::default_rx_height_m, double samples_per_meter = 8.0)
{
    require(samples_per_meter > 0.0, "samples_per_meter must be positive");
    const double x0 = static_cast<double>(x) + 0.5, y0 = static_cast<double>(y) + 0.5, z0 = rx_height;
    const double x1 = static_cast<double>(tx.x) + 0.5, y1 = static_cast<double>(tx.y) + 0.5, z1 = tx.z;
    const double len = std::sqrt((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0) + (z1 - z0) * (z1 - z0));
    RayBlockage r;
    r.total_length = len;
    if (len == 0.0)
        return r;
    const long n = std::max(1L, static_cast<long>(std::ceil(len * samples_per_meter)));
    long blocked = 0;
    for (long k = 0; k < n; ++k) {
        const double t = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
        const double px = x0 + t * (x1 - x0), py = y0 + t * (y1 - y0), pz = z0 + t * (z1 - z0);
        const long cx = static_cast<long>(std::floor(px)), cy = static_cast<long>(std::floor(py));
        if (!map.contains(cx, cy))
            continue;
        const double b = map(cx, cy);
        if (b > 0.0 && pz < b)
            ++blocked;
    }
    r.blocked_length = len * static_cast<double>(blocked) / static_cast<double>(n);
    return r;
}

// Full-map blocked length in meters from the voxel oracle; feeds the propagation oracle.
inline Grid<double> blocked_length_map(const geo::CityMap &map, const geo::TxSite &tx,
                                       double rx_height = geo::default_rx_height_m, double samples_per_meter = 8.0,
                                       unsigned threads = 0)
{
    Grid<double> out(map.width(), map.height(), 0.0);
    parallel_for(
        map.height(),
        [&](std::size_t y) {
            for (std::size_t x = 0; x < map.width(); ++x)
                out(x, y) = voxel_ray_oracle(map, tx, static_cast<long>(x), static_cast<long>(y), rx_height,
                                             samples_per_meter)
                                .blocked_length;
        },
        threads);
    return out;
}

// 8-bit inspection raster: round(255 * fraction).
inline Grid<std::uint8_t> to_gray(const LosMap &m)
{
    Grid<std::uint8_t> out(m.width(), m.height(), 0);
    std::transform(m.begin(), m.end(), out.begin(), [](double v) {
        return static_cast<std::uint8_t>(std::clamp(round_half_away(255.0 * v), 0L, 255L));
    });
    return out;
}

} // namespace remforge::los

#endif
