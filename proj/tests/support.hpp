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

// Test helpers shared by the unit tests and the acceptance runner: independent
// reference implementations, fixed map suites and finite-difference checks.

#ifndef REMFORGE_TESTS_SUPPORT_HPP
#define REMFORGE_TESTS_SUPPORT_HPP

#include "remforge/aso.hpp"
#include "remforge/geo.hpp"
#include "remforge/los.hpp"
#include "remforge/nn/layers.hpp"
#include "remforge/nn/loss.hpp"
#include "remforge/nn/unet.hpp"
#include "remforge/pipeline.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace remforge::testing {

// ---------------------------------------------------------------------------------
// LoS references

// Per-pixel LoS written from the closed form of the sampled line: with N the larger of
// |dx| and |dy|, sample i sits at major = start + i and minor = start + round(i * m / N),
// rounding halves up; x is the major axis on ties. The ray height at sample i is
// z_rx + (z_tx - z_rx) * i / N.
inline double pxlos_reference(const geo::CityMap &map, const geo::TxSite &tx, long x, long y, double rx)
{
    if (x == tx.x && y == tx.y)
        return 1.0;
    const long dx = tx.x - x, dy = tx.y - y;
    const long ax = std::labs(dx), ay = std::labs(dy);
    const long n = std::max(ax, ay);
    const bool x_major = ax >= ay;
    const long m = x_major ? ay : ax;
    const long sx = dx >= 0 ? 1 : -1, sy = dy >= 0 ? 1 : -1;
    long blocked = 0;
    for (long i = 0; i <= n; ++i) {
        const long off = (2 * i * m + n) / (2 * n);
        const long px = x_major ? x + sx * i : x + sx * off;
        const long py = x_major ? y + sy * off : y + sy * i;
        const double z = rx + (tx.z - rx) * static_cast<double>(i) / static_cast<double>(n);
        if (map(static_cast<std::size_t>(px), static_cast<std::size_t>(py)) >= z)
            ++blocked;
    }
    return 1.0 - static_cast<double>(blocked) / static_cast<double>(n + 1);
}

inline los::LosMap pxlos_reference(const geo::CityMap &map, const geo::TxSite &tx, double rx)
{
    los::LosMap out(map.width(), map.height());
    for (std::size_t y = 0; y < map.height(); ++y)
        for (std::size_t x = 0; x < map.width(); ++x)
            out(x, y) = pxlos_reference(map, tx, static_cast<long>(x), static_cast<long>(y), rx);
    return out;
}

// Batched LoS by the closed form: the receiver (x, y, 0) walks L + 1 cells toward
// (tx.x, tx.y, round(tx.z)), L the largest per-axis displacement of its own line, cell s
// offset along each axis by round(s * |d| / L). A cell counts when its column is a
// building with floor(height) >= its z. Normalized by the batch-wide D.
inline los::LosMap ablos_reference(const geo::CityMap &map, const geo::TxSite &tx)
{
    const long w = static_cast<long>(map.width()), h = static_cast<long>(map.height());
    const long zt = std::lround(tx.z);
    const long d = std::max({tx.x, w - 1 - tx.x, tx.y, h - 1 - tx.y, zt, 1L});
    los::LosMap out(map.width(), map.height());
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
            const long dx = tx.x - x, dy = tx.y - y, dz = zt;
            const long len = std::max({std::labs(dx), std::labs(dy), dz});
            long count = 0;
            for (long s = 0; s <= len && len > 0; ++s) {
                auto off = [&](long delta) {
                    const long o = (2 * s * std::labs(delta) + len) / (2 * len);
                    return delta >= 0 ? o : -o;
                };
                const long cx = x + off(dx), cy = y + off(dy), cz = off(dz);
                const double b = map(static_cast<std::size_t>(cx), static_cast<std::size_t>(cy));
                if (b > 0.0 && std::floor(b) >= static_cast<double>(cz))
                    ++count;
            }
            out(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) =
                std::clamp(1.0 - static_cast<double>(count) / static_cast<double>(d), 0.0, 1.0);
        }
    return out;
}

// Arbitrary (not necessarily square) map with story-quantized buildings.
inline geo::CityMap random_map(std::mt19937_64 &rng, std::size_t w, std::size_t h, double density)
{
    std::bernoulli_distribution build(density);
    std::uniform_int_distribution<int> stories(geo::min_stories, geo::max_stories);
    Grid<double> g(w, h, 0.0);
    for (double &v : g)
        v = build(rng) ? geo::height_for_stories(stories(rng)) : 0.0;
    return geo::CityMap(std::move(g));
}

// Transmitter anywhere on the map, antenna height up to 25 m.
inline geo::TxSite random_tx(std::mt19937_64 &rng, const geo::CityMap &map)
{
    std::uniform_int_distribution<long> px(0, static_cast<long>(map.width()) - 1);
    std::uniform_int_distribution<long> py(0, static_cast<long>(map.height()) - 1);
    std::uniform_real_distribution<double> pz(0.0, 25.0);
    geo::TxSite t{px(rng), py(rng), 0.0};
    t.z = std::max(pz(rng), map(static_cast<std::size_t>(t.x), static_cast<std::size_t>(t.y)));
    return t;
}

// ---------------------------------------------------------------------------------
// fixed suites

// 100 map bundles, 64 x 64, one transmitter each, densities drawn from a fixed stream.
inline std::vector<geo::MapBundle> frozen_los_suite(std::size_t n = 100)
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> dens(0.15, 0.40);
    std::vector<geo::MapBundle> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = dens(rng);
        out.push_back(geo::generate_bundle(5000 + i, 64, d, 1, "suite_" + std::to_string(i)));
    }
    return out;
}

// The learning set: 20 maps of 64 x 64 with 4 transmitters each.
inline std::vector<geo::MapBundle> learning_maps(std::size_t count = 20, std::size_t size = 64, std::size_t tx = 4)
{
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> dens(0.15, 0.40);
    std::vector<geo::MapBundle> out;
    for (std::size_t i = 0; i < count; ++i) {
        const double d = dens(rng);
        out.push_back(geo::generate_bundle(100 + i, size, d, tx, "map_" + std::to_string(i)));
    }
    return out;
}

// ---------------------------------------------------------------------------------
// finite differences

// ||a - n|| / (||a|| + ||n||) with a small floor so exact zeros compare as zero error.
inline double relative_error(std::span<const double> analytic, std::span<const double> numeric)
{
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-12);
}

// Central differences of a scalar function with respect to every entry of x.
inline std::vector<double> numeric_gradient(nn::Tensor &x, const std::function<double()> &f, double h = 1e-5)
{
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f();
        x[i] = keep - h;
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline std::vector<double> to_vector(const nn::Tensor &t) { return {t.values().begin(), t.values().end()}; }

inline nn::Tensor random_tensor(std::mt19937_64 &rng, nn::Shape shape, double scale = 1.0)
{
    std::normal_distribution<double> n(0.0, scale);
    nn::Tensor t(std::move(shape));
    for (double &v : t.values())
        v = n(rng);
    return t;
}

inline double dot(const nn::Tensor &a, const nn::Tensor &b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

// Worst relative error over every gradient of every nn layer and both losses for one
// randomized shape drawn from rng. Each layer is probed through the scalar <out, R>
// with a random R.
struct GradReport
{
    double worst = 0.0;
    std::string worst_case;

    void note(const std::string &what, double e)
    {
        if (worst_case.empty() || e > worst) {
            worst = e;
            worst_case = what;
        }
    }
};

inline GradReport gradcheck_round(std::mt19937_64 &rng)
{
    using nn::Tensor;
    GradReport rep;
    std::uniform_int_distribution<std::size_t> ch(1, 4), half(1, 4);
    const std::size_t c = ch(rng), o = ch(rng), hh = 2 * half(rng), ww = 2 * half(rng);

    for (std::size_t k : {std::size_t{1}, std::size_t{3}}) {
        Tensor x = random_tensor(rng, {c, hh, ww}), wt = random_tensor(rng, {o, c, k, k}), b = random_tensor(rng, {o});
        nn::ConvCache cache;
        const Tensor out = nn::conv2d(x, wt, b, &cache);
        const Tensor r = random_tensor(rng, out.shape());
        const auto g = nn::conv2d_backward(r, x, wt, cache);
        auto f = [&] { return dot(nn::conv2d(x, wt, b), r); };
        const std::string tag = "conv2d k=" + std::to_string(k);
        rep.note(tag + " input", relative_error(g.input.values(), numeric_gradient(x, f)));
        rep.note(tag + " weight", relative_error(g.weight.values(), numeric_gradient(wt, f)));
        rep.note(tag + " bias", relative_error(g.bias.values(), numeric_gradient(b, f)));
    }
    {
        // keep inputs away from the kink so the difference quotient never straddles it
        Tensor x = random_tensor(rng, {c, hh, ww});
        for (double &v : x.values())
            v += v >= 0.0 ? 0.1 : -0.1;
        const Tensor out = nn::relu(x);
        const Tensor r = random_tensor(rng, out.shape());
        const Tensor g = nn::relu_backward(r, out);
        rep.note("relu", relative_error(g.values(), numeric_gradient(x, [&] { return dot(nn::relu(x), r); })));
    }
    {
        // distinct values spaced well apart, so the pooling argmax is stable under h
        Tensor x({c, hh, ww});
        std::vector<double> vals(x.size());
        for (std::size_t i = 0; i < vals.size(); ++i)
            vals[i] = 0.1 * static_cast<double>(i);
        std::shuffle(vals.begin(), vals.end(), rng);
        x.values().assign(vals.begin(), vals.end());
        nn::PoolCache cache;
        const Tensor out = nn::maxpool2(x, &cache);
        const Tensor r = random_tensor(rng, out.shape());
        const Tensor g = nn::maxpool2_backward(r, cache);
        rep.note("maxpool2", relative_error(g.values(), numeric_gradient(x, [&] { return dot(nn::maxpool2(x), r); })));
    }
    {
        Tensor x = random_tensor(rng, {c, hh / 2, ww / 2}), wt = random_tensor(rng, {c, o, 2, 2}),
               b = random_tensor(rng, {o});
        const Tensor out = nn::tconv2(x, wt, b);
        const Tensor r = random_tensor(rng, out.shape());
        const auto g = nn::tconv2_backward(r, x, wt);
        auto f = [&] { return dot(nn::tconv2(x, wt, b), r); };
        rep.note("tconv2 input", relative_error(g.input.values(), numeric_gradient(x, f)));
        rep.note("tconv2 weight", relative_error(g.weight.values(), numeric_gradient(wt, f)));
        rep.note("tconv2 bias", relative_error(g.bias.values(), numeric_gradient(b, f)));
    }
    {
        Tensor a = random_tensor(rng, {c, hh, ww}), e = random_tensor(rng, {o, hh, ww});
        const Tensor out = nn::concat_skip(a, e);
        const Tensor r = random_tensor(rng, out.shape());
        const auto [ga, ge] = nn::concat_skip_backward(r, c);
        auto f = [&] { return dot(nn::concat_skip(a, e), r); };
        rep.note("concat_skip decoder", relative_error(ga.values(), numeric_gradient(a, f)));
        rep.note("concat_skip encoder", relative_error(ge.values(), numeric_gradient(e, f)));
    }
    {
        Tensor p = random_tensor(rng, {1, hh, ww}), t = random_tensor(rng, {1, hh, ww});
        std::vector<std::uint8_t> mask(p.size());
        std::bernoulli_distribution on(0.7);
        for (auto &m : mask)
            m = on(rng);
        mask[0] = 1;
        using MaskPtr = const std::vector<std::uint8_t> *;
        const std::array<MaskPtr, 2> masks{nullptr, &mask};
        for (MaskPtr mk : masks) {
            const auto l = nn::mse_loss(p, t, mk);
            rep.note(mk ? "mse masked" : "mse",
                     relative_error(l.grad.values(), numeric_gradient(p, [&] { return nn::mse_loss(p, t, mk).loss; })));
        }
        Tensor mu = random_tensor(rng, {1, hh, ww}), s = random_tensor(rng, {1, hh, ww}, 0.5);
        for (MaskPtr mk : masks) {
            const auto l = nn::gaussian_nll_loss(mu, s, t, mk);
            auto f = [&] { return nn::gaussian_nll_loss(mu, s, t, mk).loss; };
            const std::string tag = mk ? "gaussian_nll masked" : "gaussian_nll";
            rep.note(tag + " mean", relative_error(l.grad_mean.values(), numeric_gradient(mu, f)));
            rep.note(tag + " log_var", relative_error(l.grad_log_var.values(), numeric_gradient(s, f)));
        }
    }
    return rep;
}

// Whole u-net: every parameter tensor and the input, through <unet(x), R>.
inline GradReport gradcheck_unet(std::mt19937_64 &rng, std::size_t in_channels, std::size_t depth, std::size_t base,
                                 std::size_t side)
{
    using nn::Tensor;
    GradReport rep;
    nn::UNetParams p = nn::init_params({in_channels, depth, base, 3}, rng());
    // perturb biases so ReLU units sit away from zero on average
    for (auto &t : p.tensors)
        for (double &v : t.values())
            v += 0.01 * std::normal_distribution<double>(0.0, 1.0)(rng);
    Tensor x = random_tensor(rng, {in_channels, side, side});
    nn::UNetCache cache;
    const Tensor out = nn::unet_forward(p, x, &cache);
    const Tensor r = random_tensor(rng, out.shape());
    Tensor gx;
    const auto g = nn::unet_backward(p, cache, r, &gx);
    auto f = [&] { return dot(nn::unet_forward(p, x), r); };
    for (std::size_t t = 0; t < p.tensors.size(); ++t)
        rep.note("unet " + p.names[t], relative_error(g[t].values(), numeric_gradient(p.tensors[t], f)));
    rep.note("unet input", relative_error(gx.values(), numeric_gradient(x, f)));
    return rep;
}

// ---------------------------------------------------------------------------------
// AP selection

// Integer-valued gains in [-111, -75] for every AP; ties are frequent on purpose.
inline aso::RemSet random_rems(std::mt19937_64 &rng, const aso::CfNetwork &net)
{
    std::uniform_int_distribution<int> g(-111, -75);
    aso::RemSet out;
    for (std::size_t ap = 0; ap < net.aps.size(); ++ap) {
        propagation::RadioMap m(net.map.width(), net.map.height());
        for (double &v : m)
            v = g(rng);
        out.emplace(ap, std::move(m));
    }
    return out;
}

// Strictly increasing map applied to every gain: affine with an integer slope and
// offset, or an exponential; both keep distinct integer gains distinct.
inline aso::RemSet rescale(const aso::RemSet &in, int kind, double a, double b)
{
    aso::RemSet out = in;
    for (auto &[ap, m] : out)
        for (double &v : m)
            v = kind == 0 ? a * v + b : std::exp(v / a);
    return out;
}

// One trial: selection errors for k = 1..3 before and after rescaling both the true
// and the predicted gains with the same increasing function must agree exactly.
inline bool monotone_rescaling_trial(std::mt19937_64 &rng, const geo::MapBundle &b)
{
    auto net = aso::make_network(b.map, b.transmitters, 4, rng());
    const auto truth = random_rems(rng, net);
    auto pred = truth;
    std::uniform_int_distribution<int> noise(-3, 3);
    for (auto &[ap, m] : pred)
        for (double &v : m)
            v = std::clamp(v + noise(rng), -111.0, -75.0);
    const auto locs = aso::outdoor_locations(net.map);
    const std::vector<std::size_t> ks{1, 2, 3};
    const auto before = aso::selection_errors(net, ks, pred, truth, locs);
    std::uniform_int_distribution<int> pick(0, 1), slope(1, 9), offset(-50, 50);
    std::uniform_real_distribution<double> scale(5.0, 20.0);
    const int kind = pick(rng);
    const double a = kind == 0 ? slope(rng) : scale(rng);
    const double c = kind == 0 ? offset(rng) : 0.0;
    const auto after = aso::selection_errors(net, ks, rescale(pred, kind, a, c), rescale(truth, kind, a, c), locs);
    for (std::size_t i = 0; i < ks.size(); ++i)
        if (before[i].error_pct != after[i].error_pct)
            return false;
    return true;
}

} // namespace remforge::testing

#endif
