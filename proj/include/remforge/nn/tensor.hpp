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

#ifndef REMFORGE_NN_TENSOR_HPP
#define REMFORGE_NN_TENSOR_HPP

#include "../core.hpp"

#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace remforge::nn {

using Shape = std::vector<std::size_t>;

// Every buffer starts on a 64-byte boundary. Eigen's GEMM kernels choose their packing
// and peeling by operand alignment, so a fixed alignment keeps results bit-identical
// from run to run.
template <typename T>
struct AlignedAllocator
{
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U> &) noexcept {}

    T *allocate(std::size_t n) { return static_cast<T *>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T *p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <typename U>
    bool operator==(const AlignedAllocator<U> &) const noexcept { return true; }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

inline std::size_t shape_size(const Shape &s)
{
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape &s)
{
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i)
        os << (i ? "," : "") << s[i];
    os << ')';
    return os.str();
}

// n-dimensional array of doubles, row-major.
class Tensor
{
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
    Tensor(Shape shape, const std::vector<double> &data) : shape_(std::move(shape)), data_(data.begin(), data.end())
    {
        require(data_.size() == shape_size(shape_), "tensor data does not match shape " + shape_str(shape_),
                "shape_mismatch");
    }

    const Shape &shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    double *data() noexcept { return data_.data(); }
    const double *data() const noexcept { return data_.data(); }
    std::span<double> span() noexcept { return data_; }
    std::span<const double> span() const noexcept { return data_; }
    Storage &values() noexcept { return data_; }
    const Storage &values() const noexcept { return data_; }

    double &operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // (c, y, x) access for rank-3 tensors
    double &at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const { return data_[(c * shape_[1] + y) * shape_[2] + x]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor &operator+=(const Tensor &o)
    {
        require(shape_ == o.shape_, "shape mismatch in +=", "shape_mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i)
            data_[i] += o.data_[i];
        return *this;
    }

    friend bool operator==(const Tensor &, const Tensor &) = default;

private:
    Shape shape_;
    Storage data_;
};

inline void require_shape(const Tensor &t, const Shape &expected, const char *what)
{
    require(t.shape() == expected,
            std::string(what) + ": expected shape " + shape_str(expected) + ", got " + shape_str(t.shape()),
            "shape_mismatch");
}

} // namespace remforge::nn

#endif
