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

// Layer primitives of the u-net. All tensors are single samples laid out as
// (channels, height, width). Every forward has an exact backward.

#ifndef REMFORGE_NN_LAYERS_HPP
#define REMFORGE_NN_LAYERS_HPP

#include "tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <limits>

namespace remforge::nn {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// (C, H, W) -> (C*k*k, H*W) patch matrix with zero padding k/2
inline void im2col(const Tensor &in, std::size_t k, Storage &cols)
{
    const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
    const long pad = static_cast<long>(k / 2);
    cols.assign(c * k * k * h * w, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                double *row = cols.data() + ((ch * k + ky) * k + kx) * h * w;
                const long oy = static_cast<long>(ky) - pad, ox = static_cast<long>(kx) - pad;
                for (std::size_t y = 0; y < h; ++y) {
                    const long sy = static_cast<long>(y) + oy;
                    if (sy < 0 || sy >= static_cast<long>(h))
                        continue;
                    const double *src = in.data() + (ch * h + static_cast<std::size_t>(sy)) * w;
                    double *dst = row + y * w;
                    const long x0 = std::max(0L, -ox), x1 = std::min(static_cast<long>(w), static_cast<long>(w) - ox);
                    for (long x = x0; x < x1; ++x)
                        dst[x] = src[x + ox];
                }
            }
}

inline void col2im(const Storage &cols, std::size_t k, Tensor &out)
{
    const std::size_t c = out.dim(0), h = out.dim(1), w = out.dim(2);
    const long pad = static_cast<long>(k / 2);
    out.fill(0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
                const double *row = cols.data() + ((ch * k + ky) * k + kx) * h * w;
                const long oy = static_cast<long>(ky) - pad, ox = static_cast<long>(kx) - pad;
                for (std::size_t y = 0; y < h; ++y) {
                    const long sy = static_cast<long>(y) + oy;
                    if (sy < 0 || sy >= static_cast<long>(h))
                        continue;
                    double *dst = out.data() + (ch * h + static_cast<std::size_t>(sy)) * w;
                    const double *src = row + y * w;
                    const long x0 = std::max(0L, -ox), x1 = std::min(static_cast<long>(w), static_cast<long>(w) - ox);
                    for (long x = x0; x < x1; ++x)
                        dst[x + ox] += src[x];
                }
            }
}

} // namespace detail

struct ConvCache
{
    Storage cols; // im2col of the input (empty for 1x1 kernels, which reuse the input)
    Shape in_shape;
};

struct ConvGrads
{
    Tensor input;
    Tensor weight;
    Tensor bias;
};

// Cross-correlation with an odd square kernel and zero padding k/2; weights (O, C, k, k).
inline Tensor conv2d(const Tensor &in, const Tensor &weight, const Tensor &bias, ConvCache *cache = nullptr)
{
    require(in.rank() == 3 && weight.rank() == 4, "conv2d: expected (C,H,W) input and (O,C,k,k) weights",
            "shape_mismatch");
    const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
    const std::size_t o = weight.dim(0), k = weight.dim(2);
    require(weight.dim(1) == c && weight.dim(3) == k && k % 2 == 1, "conv2d: weight shape " +
                                                                         shape_str(weight.shape()) +
                                                                         " incompatible with input " +
                                                                         shape_str(in.shape()),
            "shape_mismatch");
    require_shape(bias, {o}, "conv2d bias");

    Storage local;
    Storage &cols = cache ? cache->cols : local;
    const double *colptr = in.data();
    if (k > 1) {
        detail::im2col(in, k, cols);
        colptr = cols.data();
    } else {
        cols.clear();
    }
    if (cache)
        cache->in_shape = in.shape();

    Tensor out({o, h, w});
    detail::MapMat y(out.data(), static_cast<long>(o), static_cast<long>(h * w));
    detail::ConstMapMat wm(weight.data(), static_cast<long>(o), static_cast<long>(c * k * k));
    detail::ConstMapMat x(colptr, static_cast<long>(c * k * k), static_cast<long>(h * w));
    y.noalias() = wm * x;
    for (std::size_t i = 0; i < o; ++i)
        y.row(static_cast<long>(i)).array() += bias[i];
    return out;
}

// For 1x1 kernels the cache does not hold the input; pass it again as `in`.
inline ConvGrads conv2d_backward(const Tensor &grad_out, const Tensor &in, const Tensor &weight,
                                 const ConvCache &cache)
{
    const std::size_t c = weight.dim(1), k = weight.dim(2), o = weight.dim(0);
    const std::size_t h = cache.in_shape.at(1), w = cache.in_shape.at(2);
    require_shape(grad_out, {o, h, w}, "conv2d_backward grad");
    const double *colptr = k > 1 ? cache.cols.data() : in.data();

    ConvGrads g{Tensor(cache.in_shape), Tensor(weight.shape()), Tensor({o})};
    detail::ConstMapMat dy(grad_out.data(), static_cast<long>(o), static_cast<long>(h * w));
    detail::ConstMapMat x(colptr, static_cast<long>(c * k * k), static_cast<long>(h * w));
    detail::ConstMapMat wm(weight.data(), static_cast<long>(o), static_cast<long>(c * k * k));
    detail::MapMat dw(g.weight.data(), static_cast<long>(o), static_cast<long>(c * k * k));
    dw.noalias() = dy * x.transpose();
    for (std::size_t i = 0; i < o; ++i)
        g.bias[i] = dy.row(static_cast<long>(i)).sum();
    if (k > 1) {
        Storage dcols(c * k * k * h * w);
        detail::MapMat dx(dcols.data(), static_cast<long>(c * k * k), static_cast<long>(h * w));
        dx.noalias() = wm.transpose() * dy;
        detail::col2im(dcols, k, g.input);
    } else {
        detail::MapMat dx(g.input.data(), static_cast<long>(c), static_cast<long>(h * w));
        dx.noalias() = wm.transpose() * dy;
    }
    return g;
}

inline Tensor relu(const Tensor &in)
{
    Tensor out = in;
    for (double &v : out.values())
        v = v > 0.0 ? v : 0.0;
    return out;
}

// Gradient masked by the forward output (the derivative at exactly 0 is taken as 0).
inline Tensor relu_backward(const Tensor &grad_out, const Tensor &out)
{
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(out[i] > 0.0))
            g[i] = 0.0;
    return g;
}

struct PoolCache
{
    std::vector<std::uint32_t> argmax; // flat input index per output element
    Shape in_shape;
};

// 2x2 max pooling with stride 2; first maximum in raster order wins ties.
inline Tensor maxpool2(const Tensor &in, PoolCache *cache = nullptr)
{
    require(in.rank() == 3 && in.dim(1) % 2 == 0 && in.dim(2) % 2 == 0, "maxpool2 needs even spatial dims",
            "shape_mismatch");
    const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
    Tensor out({c, h / 2, w / 2});
    if (cache) {
        cache->argmax.resize(out.size());
        cache->in_shape = in.shape();
    }
    std::size_t oi = 0;
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h / 2; ++y)
            for (std::size_t x = 0; x < w / 2; ++x, ++oi) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t arg = 0;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = (ch * h + 2 * y + dy) * w + 2 * x + dx;
                        if (in[idx] > best) {
                            best = in[idx];
                            arg = idx;
                        }
                    }
                out[oi] = best;
                if (cache)
                    cache->argmax[oi] = static_cast<std::uint32_t>(arg);
            }
    return out;
}

inline Tensor maxpool2_backward(const Tensor &grad_out, const PoolCache &cache)
{
    Tensor g(cache.in_shape);
    for (std::size_t i = 0; i < grad_out.size(); ++i)
        g[cache.argmax[i]] += grad_out[i];
    return g;
}

// Transposed convolution, kernel 2, stride 2; weights (C_in, O, 2, 2).
// out[o, 2i+a, 2j+b] = bias[o] + sum_c in[c, i, j] * W[c, o, a, b]
inline Tensor tconv2(const Tensor &in, const Tensor &weight, const Tensor &bias)
{
    require(in.rank() == 3 && weight.rank() == 4 && weight.dim(0) == in.dim(0) && weight.dim(2) == 2 &&
                weight.dim(3) == 2,
            "tconv2: weight shape " + shape_str(weight.shape()) + " incompatible with input " + shape_str(in.shape()),
            "shape_mismatch");
    const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2), o = weight.dim(1);
    require_shape(bias, {o}, "tconv2 bias");
    Tensor out({o, 2 * h, 2 * w});
    detail::ConstMapMat x(in.data(), static_cast<long>(c), static_cast<long>(h * w));
    detail::ConstMapMat wm(weight.data(), static_cast<long>(c), static_cast<long>(o * 4));
    // (O*4, H*W): row (oc*4 + a*2 + b)
    detail::RowMat y = wm.transpose() * x;
    for (std::size_t oc = 0; oc < o; ++oc)
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b) {
                const auto row = y.row(static_cast<long>(oc * 4 + a * 2 + b));
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j)
                        out.at(oc, 2 * i + a, 2 * j + b) = row(static_cast<long>(i * w + j)) + bias[oc];
            }
    return out;
}

struct TconvGrads
{
    Tensor input;
    Tensor weight;
    Tensor bias;
};

inline TconvGrads tconv2_backward(const Tensor &grad_out, const Tensor &in, const Tensor &weight)
{
    const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2), o = weight.dim(1);
    require_shape(grad_out, {o, 2 * h, 2 * w}, "tconv2_backward grad");
    detail::RowMat dy(static_cast<long>(o * 4), static_cast<long>(h * w));
    TconvGrads g{Tensor(in.shape()), Tensor(weight.shape()), Tensor({o})};
    for (std::size_t oc = 0; oc < o; ++oc) {
        double bsum = 0.0;
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j) {
                        const double v = grad_out.at(oc, 2 * i + a, 2 * j + b);
                        dy(static_cast<long>(oc * 4 + a * 2 + b), static_cast<long>(i * w + j)) = v;
                        bsum += v;
                    }
        g.bias[oc] = bsum;
    }
    detail::ConstMapMat x(in.data(), static_cast<long>(c), static_cast<long>(h * w));
    detail::ConstMapMat wm(weight.data(), static_cast<long>(c), static_cast<long>(o * 4));
    detail::MapMat dx(g.input.data(), static_cast<long>(c), static_cast<long>(h * w));
    detail::MapMat dw(g.weight.data(), static_cast<long>(c), static_cast<long>(o * 4));
    dx.noalias() = wm * dy;
    dw.noalias() = x * dy.transpose();
    return g;
}

// Channel concatenation: decoder features first, then the encoder skip.
inline Tensor concat_skip(const Tensor &decoder, const Tensor &encoder)
{
    require(decoder.rank() == 3 && encoder.rank() == 3 && decoder.dim(1) == encoder.dim(1) &&
                decoder.dim(2) == encoder.dim(2),
            "concat_skip: spatial shapes differ", "shape_mismatch");
    Tensor out({decoder.dim(0) + encoder.dim(0), decoder.dim(1), decoder.dim(2)});
    std::copy(decoder.values().begin(), decoder.values().end(), out.values().begin());
    std::copy(encoder.values().begin(), encoder.values().end(),
              out.values().begin() + static_cast<long>(decoder.size()));
    return out;
}

inline std::pair<Tensor, Tensor> concat_skip_backward(const Tensor &grad_out, std::size_t decoder_channels)
{
    const std::size_t h = grad_out.dim(1), w = grad_out.dim(2);
    Tensor gd({decoder_channels, h, w}), ge({grad_out.dim(0) - decoder_channels, h, w});
    std::copy_n(grad_out.values().begin(), gd.size(), gd.values().begin());
    std::copy(grad_out.values().begin() + static_cast<long>(gd.size()), grad_out.values().end(),
              ge.values().begin());
    return {gd, ge};
}

} // namespace remforge::nn

#endif
