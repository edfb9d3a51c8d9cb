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

// U-net regressor mapping a (K, H, W) input stack to a (1, H, W) map.
//
//   encoder level l:  conv3-relu-conv3-relu (base * 2^l channels), then 2x2 max pool
//   bottleneck:       conv3-relu-conv3-relu (base * 2^depth channels)
//   decoder level l:  2x2 stride-2 transposed conv, concat with encoder level l,
//                     conv3-relu-conv3-relu
//   head:             1x1 conv to one channel, linear output

#ifndef REMFORGE_NN_UNET_HPP
#define REMFORGE_NN_UNET_HPP

#include "layers.hpp"

#include <atomic>
#include <cstdint>
#include <random>
#include <string>

namespace remforge::nn {

struct UNetConfig
{
    std::size_t in_channels = 3;
    std::size_t depth = 3;
    std::size_t base_channels = 16;
    std::size_t kernel = 3;

    void validate() const
    {
        require(in_channels >= 1, "u-net needs at least one input channel");
        require(depth >= 1, "u-net depth must be at least 1");
        require(base_channels >= 1, "u-net base width must be at least 1");
        require(kernel == 3, "u-net kernel size is fixed to 3");
    }

    std::size_t width(std::size_t level) const { return base_channels << level; }

    friend bool operator==(const UNetConfig &, const UNetConfig &) = default;
};

// Copyable relaxed counter, used to account how often a parameter set is evaluated.
class UseCounter
{
public:
    UseCounter() = default;
    UseCounter(const UseCounter &o) : n_(o.n_.load(std::memory_order_relaxed)) {}
    UseCounter &operator=(const UseCounter &o)
    {
        n_.store(o.n_.load(std::memory_order_relaxed), std::memory_order_relaxed);
        return *this;
    }
    void bump() const { n_.fetch_add(1, std::memory_order_relaxed); }
    std::uint64_t value() const { return n_.load(std::memory_order_relaxed); }

private:
    mutable std::atomic<std::uint64_t> n_{0};
};

struct UNetParams
{
    UNetConfig config;
    std::uint64_t seed = 0;
    std::vector<std::string> names;
    std::vector<Tensor> tensors;
    UseCounter forward_calls;

    friend bool operator==(const UNetParams &a, const UNetParams &b)
    {
        return a.config == b.config && a.seed == b.seed && a.names == b.names && a.tensors == b.tensors;
    }
};

// Names and shapes in declaration order; this order is also the on-disk order.
inline std::vector<std::pair<std::string, Shape>> unet_layout(const UNetConfig &cfg)
{
    cfg.validate();
    std::vector<std::pair<std::string, Shape>> out;
    const std::size_t k = cfg.kernel;
    auto conv = [&](const std::string &name, std::size_t cin, std::size_t cout, std::size_t ks) {
        out.emplace_back(name + ".w", Shape{cout, cin, ks, ks});
        out.emplace_back(name + ".b", Shape{cout});
    };
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        const std::size_t cin = l == 0 ? cfg.in_channels : cfg.width(l - 1);
        conv("enc" + std::to_string(l) + ".conv1", cin, cfg.width(l), k);
        conv("enc" + std::to_string(l) + ".conv2", cfg.width(l), cfg.width(l), k);
    }
    conv("mid.conv1", cfg.width(cfg.depth - 1), cfg.width(cfg.depth), k);
    conv("mid.conv2", cfg.width(cfg.depth), cfg.width(cfg.depth), k);
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        const std::size_t l = cfg.depth - 1 - i;
        const std::string p = "dec" + std::to_string(l);
        out.emplace_back(p + ".up.w", Shape{cfg.width(l + 1), cfg.width(l), 2, 2});
        out.emplace_back(p + ".up.b", Shape{cfg.width(l)});
        conv(p + ".conv1", 2 * cfg.width(l), cfg.width(l), k);
        conv(p + ".conv2", cfg.width(l), cfg.width(l), k);
    }
    conv("head", cfg.width(0), 1, 1);
    return out;
}

// He (fan-in) initialization, zero biases; deterministic per seed.
inline UNetParams init_params(const UNetConfig &cfg, std::uint64_t seed)
{
    UNetParams p;
    p.config = cfg;
    p.seed = seed;
    std::mt19937_64 rng(seed);
    for (auto &[name, shape] : unet_layout(cfg)) {
        Tensor t(shape);
        if (shape.size() == 4) {
            const bool transposed = name.find(".up.") != std::string::npos;
            const std::size_t fan_in = transposed ? shape[0] : shape[1] * shape[2] * shape[3];
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
            for (double &v : t.values())
                v = dist(rng);
        }
        p.names.push_back(name);
        p.tensors.push_back(std::move(t));
    }
    return p;
}

inline std::vector<Tensor> zeros_like(const std::vector<Tensor> &ts)
{
    std::vector<Tensor> out;
    out.reserve(ts.size());
    for (const auto &t : ts)
        out.emplace_back(t.shape());
    return out;
}

struct ConvReluCache
{
    Tensor in;
    ConvCache conv;
    Tensor out; // post-activation
};

struct UNetCache
{
    std::vector<ConvReluCache> enc1, enc2, dec1, dec2;
    std::vector<PoolCache> pool;
    ConvReluCache mid1, mid2;
    std::vector<Tensor> up_in;
    Tensor head_in;
    ConvCache head;
};

namespace detail {

struct ParamCursor
{
    const std::vector<Tensor> &t;
    std::size_t i = 0;
    const Tensor &next() { return t[i++]; }
};

inline Tensor conv_relu(const Tensor &in, const Tensor &w, const Tensor &b, ConvReluCache *c)
{
    if (!c)
        return relu(conv2d(in, w, b));
    c->in = in;
    c->out = relu(conv2d(in, w, b, &c->conv));
    return c->out;
}

} // namespace detail

inline Tensor unet_forward(const UNetParams &params, const Tensor &input, UNetCache *cache = nullptr)
{
    const UNetConfig &cfg = params.config;
    require(input.rank() == 3 && input.dim(0) == cfg.in_channels,
            "u-net input must be (" + std::to_string(cfg.in_channels) + ",H,W), got " + shape_str(input.shape()),
            "shape_mismatch");
    const std::size_t div = std::size_t{1} << cfg.depth;
    require(input.dim(1) % div == 0 && input.dim(2) % div == 0,
            "u-net input side must be divisible by 2^depth", "shape_mismatch");
    params.forward_calls.bump();

    const std::size_t d = cfg.depth;
    if (cache) {
        cache->enc1.assign(d, {});
        cache->enc2.assign(d, {});
        cache->dec1.assign(d, {});
        cache->dec2.assign(d, {});
        cache->pool.assign(d, {});
        cache->up_in.assign(d, {});
    }
    detail::ParamCursor pc{params.tensors};
    std::vector<Tensor> skips(d);
    Tensor x = input;
    for (std::size_t l = 0; l < d; ++l) {
        const Tensor &w1 = pc.next(), &b1 = pc.next(), &w2 = pc.next(), &b2 = pc.next();
        x = detail::conv_relu(x, w1, b1, cache ? &cache->enc1[l] : nullptr);
        x = detail::conv_relu(x, w2, b2, cache ? &cache->enc2[l] : nullptr);
        skips[l] = x;
        x = maxpool2(x, cache ? &cache->pool[l] : nullptr);
    }
    {
        const Tensor &w1 = pc.next(), &b1 = pc.next(), &w2 = pc.next(), &b2 = pc.next();
        x = detail::conv_relu(x, w1, b1, cache ? &cache->mid1 : nullptr);
        x = detail::conv_relu(x, w2, b2, cache ? &cache->mid2 : nullptr);
    }
    for (std::size_t i = 0; i < d; ++i) {
        const std::size_t l = d - 1 - i;
        const Tensor &uw = pc.next(), &ub = pc.next();
        const Tensor &w1 = pc.next(), &b1 = pc.next(), &w2 = pc.next(), &b2 = pc.next();
        if (cache)
            cache->up_in[l] = x;
        x = concat_skip(tconv2(x, uw, ub), skips[l]);
        x = detail::conv_relu(x, w1, b1, cache ? &cache->dec1[l] : nullptr);
        x = detail::conv_relu(x, w2, b2, cache ? &cache->dec2[l] : nullptr);
    }
    const Tensor &hw = pc.next(), &hb = pc.next();
    if (cache)
        cache->head_in = x;
    return conv2d(x, hw, hb, cache ? &cache->head : nullptr);
}

// Gradients of every parameter (declaration order) given dLoss/dOutput.
inline std::vector<Tensor> unet_backward(const UNetParams &params, const UNetCache &cache, const Tensor &grad_out,
                                         Tensor *grad_input = nullptr)
{
    const std::size_t d = params.config.depth;
    const auto &t = params.tensors;
    std::vector<Tensor> g(t.size());
    std::size_t idx = t.size();

    auto conv_relu_back = [&](const Tensor &gout, const ConvReluCache &c, std::size_t wi) {
        const Tensor gpre = relu_backward(gout, c.out);
        ConvGrads cg = conv2d_backward(gpre, c.in, t[wi], c.conv);
        g[wi] = std::move(cg.weight);
        g[wi + 1] = std::move(cg.bias);
        return std::move(cg.input);
    };

    // head
    idx -= 2;
    ConvGrads hg = conv2d_backward(grad_out, cache.head_in, t[idx], cache.head);
    g[idx] = std::move(hg.weight);
    g[idx + 1] = std::move(hg.bias);
    Tensor gx = std::move(hg.input);

    std::vector<Tensor> skip_grads(d);
    for (std::size_t l = 0; l < d; ++l) { // decoder, walked from the top level back down the stack
        idx -= 6;
        gx = conv_relu_back(gx, cache.dec2[l], idx + 4);
        gx = conv_relu_back(gx, cache.dec1[l], idx + 2);
        auto [gup, gskip] = concat_skip_backward(gx, params.config.width(l));
        skip_grads[l] = std::move(gskip);
        TconvGrads tg = tconv2_backward(gup, cache.up_in[l], t[idx]);
        g[idx] = std::move(tg.weight);
        g[idx + 1] = std::move(tg.bias);
        gx = std::move(tg.input);
    }
    idx -= 4;
    gx = conv_relu_back(gx, cache.mid2, idx + 2);
    gx = conv_relu_back(gx, cache.mid1, idx);
    for (std::size_t i = 0; i < d; ++i) {
        const std::size_t l = d - 1 - i;
        idx -= 4;
        gx = maxpool2_backward(gx, cache.pool[l]);
        gx += skip_grads[l];
        gx = conv_relu_back(gx, cache.enc2[l], idx + 2);
        gx = conv_relu_back(gx, cache.enc1[l], idx);
    }
    if (grad_input)
        *grad_input = std::move(gx);
    return g;
}

} // namespace remforge::nn

#endif
