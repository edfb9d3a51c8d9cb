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

#ifndef REMFORGE_CORE_HPP
#define REMFORGE_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace remforge {

// Error carrying a short machine-readable code ("invalid_argument", "io", "format", ...)
// next to the human readable message. The CLI serializes both to stderr as JSON.
class Error : public std::runtime_error
{
public:
    Error(std::string code, const std::string &what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string &code() const noexcept { return code_; }

private:
    std::string code_;
};

inline void require(bool cond, const std::string &what, const char *code = "invalid_argument")
{
    if (!cond)
        throw Error(code, what);
}

// Rounding rule used everywhere in the toolkit: half away from zero.
inline long round_half_away(double v)
{
    return std::lround(v); // lround rounds halfway cases away from zero
}

// Dense 2D raster, row-major, addressed as (x, y) with x the column.
template <typename T>
class Grid
{
public:
    using value_type = T;

    Grid() = default;
    Grid(std::size_t width, std::size_t height, T fill = T{})
        : width_(width), height_(height), data_(width * height, fill) {}

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T &operator()(std::size_t x, std::size_t y) { return data_[y * width_ + x]; }
    const T &operator()(std::size_t x, std::size_t y) const { return data_[y * width_ + x]; }

    bool contains(long x, long y) const noexcept
    {
        return x >= 0 && y >= 0 && static_cast<std::size_t>(x) < width_ && static_cast<std::size_t>(y) < height_;
    }

    std::vector<T> &data() noexcept { return data_; }
    const std::vector<T> &data() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    bool same_shape(const Grid &o) const noexcept { return width_ == o.width_ && height_ == o.height_; }

    friend bool operator==(const Grid &a, const Grid &b) = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<T> data_;
};

// Process-wide cap on worker threads used by the data-parallel helpers.
inline unsigned &thread_cap()
{
    static unsigned cap = std::max(1u, std::thread::hardware_concurrency());
    return cap;
}

inline void set_threads(unsigned n) { thread_cap() = std::max(1u, n); }

// Static-chunked parallel loop over [0, n). Every index is handled exactly once and
// writes only its own outputs, so results do not depend on the thread count.
template <typename F>
void parallel_for(std::size_t n, F &&body, unsigned threads = 0)
{
    unsigned t = threads == 0 ? thread_cap() : threads;
    t = static_cast<unsigned>(std::min<std::size_t>(t, n));
    if (t <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(t);
    const std::size_t chunk = (n + t - 1) / t;
    for (unsigned w = 0; w < t; ++w) {
        const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi)
            break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i)
                body(i);
        });
    }
    for (auto &th : pool)
        th.join();
}

} // namespace remforge

#endif
