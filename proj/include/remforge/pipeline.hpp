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

// From maps to trained models: input assembly, LoS preprocessing, dihedral
// augmentation, density routing and the training loops for the MSE, KL and masked
// variants.
//
// Models are named M(aug, los, net, loss):
//   aug  in {DAug, noDAug}                       x8 dihedral augmentation of the training set
//   los  in {noLoS, PxLoS_f, AbLoS_f, NNLoS_f}  how the LoS input channel is produced
//   net  in {Unet, UnetGE25, UnetLT25}           single net or one of the density-routed pair
//   loss in {MSE, KL}                            plain regression or mean/variance twin

#ifndef REMFORGE_PIPELINE_HPP
#define REMFORGE_PIPELINE_HPP

#include "core.hpp"
#include "geo.hpp"
#include "los.hpp"
#include "nn/adam.hpp"
#include "nn/loss.hpp"
#include "nn/unet.hpp"
#include "propagation.hpp"

#include <cctype>
#include <chrono>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace remforge::pipeline {

using nn::Tensor;

enum class Aug { DAug, noDAug };
enum class LosKind { noLoS, PxLoS_f, AbLoS_f, NNLoS_f };
enum class NetKind { Unet, UnetGE25, UnetLT25 };
enum class LossKind { MSE, KL };

struct ModelSpec
{
    Aug aug = Aug::noDAug;
    LosKind los = LosKind::PxLoS_f;
    NetKind net = NetKind::Unet;
    LossKind loss = LossKind::MSE;

    friend bool operator==(const ModelSpec &, const ModelSpec &) = default;
};

inline const char *to_string(Aug a) { return a == Aug::DAug ? "DAug" : "noDAug"; }
inline const char *to_string(LosKind l)
{
    switch (l) {
    case LosKind::noLoS: return "noLoS";
    case LosKind::PxLoS_f: return "PxLoS_f";
    case LosKind::AbLoS_f: return "AbLoS_f";
    case LosKind::NNLoS_f: return "NNLoS_f";
    }
    return "?";
}
inline const char *to_string(NetKind n)
{
    switch (n) {
    case NetKind::Unet: return "Unet";
    case NetKind::UnetGE25: return "UnetGE25";
    case NetKind::UnetLT25: return "UnetLT25";
    }
    return "?";
}
inline const char *to_string(LossKind l) { return l == LossKind::MSE ? "MSE" : "KL"; }

inline std::string to_string(const ModelSpec &s)
{
    return std::string("M(") + to_string(s.aug) + ", " + to_string(s.los) + ", " + to_string(s.net) + ", " +
           to_string(s.loss) + ")";
}

inline Aug parse_aug(const std::string &s)
{
    if (s == "DAug") return Aug::DAug;
    if (s == "noDAug") return Aug::noDAug;
    throw Error("invalid_argument", "unknown augmentation '" + s + "'");
}
inline LosKind parse_los(const std::string &s)
{
    if (s == "noLoS") return LosKind::noLoS;
    if (s == "PxLoS_f" || s == "px") return LosKind::PxLoS_f;
    if (s == "AbLoS_f" || s == "ab") return LosKind::AbLoS_f;
    if (s == "NNLoS_f" || s == "nn") return LosKind::NNLoS_f;
    throw Error("invalid_argument", "unknown LoS method '" + s + "'");
}
inline NetKind parse_net(const std::string &s)
{
    if (s == "Unet") return NetKind::Unet;
    if (s == "UnetGE25") return NetKind::UnetGE25;
    if (s == "UnetLT25") return NetKind::UnetLT25;
    throw Error("invalid_argument", "unknown net '" + s + "'");
}
inline LossKind parse_loss(const std::string &s)
{
    if (s == "MSE") return LossKind::MSE;
    if (s == "KL") return LossKind::KL;
    throw Error("invalid_argument", "unknown loss '" + s + "'");
}

// Parses "M(aug, los, net, loss)"; whitespace is ignored.
inline ModelSpec parse_spec(const std::string &text)
{
    std::string t;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c)))
            t += c;
    require(t.size() > 3 && t.compare(0, 2, "M(") == 0 && t.back() == ')',
            "model spec must look like M(aug,los,net,loss), got '" + text + "'");
    std::vector<std::string> parts;
    std::string cur;
    for (char c : t.substr(2, t.size() - 3)) {
        if (c == ',') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    require(parts.size() == 4, "model spec needs exactly four fields, got '" + text + "'");
    return {parse_aug(parts[0]), parse_los(parts[1]), parse_net(parts[2]), parse_loss(parts[3])};
}

struct TrainConfig
{
    double lr = 1e-4;
    std::size_t epochs = 30;
    std::size_t batch_size = 4;
    std::uint64_t seed = 1;
    double val_fraction = 0.2;
    int input_mode = 3; // K in {2, 3, 5}
    std::size_t depth = 3;
    std::size_t base_channels = 16;
    unsigned threads = 0;

    void validate() const
    {
        require(lr > 0.0, "learning rate must be positive");
        require(epochs > 0, "epochs must be positive");
        require(batch_size > 0, "batch size must be positive");
        require(val_fraction > 0.0 && val_fraction < 1.0, "validation fraction must lie in (0, 1)");
        require(input_mode == 2 || input_mode == 3 || input_mode == 5, "input mode K must be 2, 3 or 5");
    }
};

// Outdoor pixels at which LSF samples are available.
struct SampleMask
{
    std::vector<std::pair<long, long>> pixels;

    Grid<std::uint8_t> to_grid(std::size_t w, std::size_t h) const
    {
        Grid<std::uint8_t> g(w, h, 0);
        for (auto [x, y] : pixels) {
            require(g.contains(x, y), "mask pixel outside the map");
            g(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 1;
        }
        return g;
    }

    // Rejects pixels on buildings unless allow_indoor is set.
    void validate(const geo::CityMap &map, bool allow_indoor = false) const
    {
        for (auto [x, y] : pixels) {
            require(map.contains(x, y), "mask pixel outside the map");
            require(allow_indoor || !map.is_building(static_cast<std::size_t>(x), static_cast<std::size_t>(y)),
                    "mask pixel lies on a building");
        }
    }
};

// Random outdoor mask covering `fraction` of all map pixels.
inline SampleMask random_outdoor_mask(const geo::CityMap &map, double fraction, std::uint64_t seed)
{
    std::vector<std::pair<long, long>> outdoor;
    for (std::size_t y = 0; y < map.height(); ++y)
        for (std::size_t x = 0; x < map.width(); ++x)
            if (!map.is_building(x, y))
                outdoor.emplace_back(static_cast<long>(x), static_cast<long>(y));
    const auto want = static_cast<std::size_t>(
        std::max(1L, round_half_away(fraction * static_cast<double>(map.width() * map.height()))));
    const std::size_t n = std::min(want, outdoor.size());
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, outdoor.size() - 1);
        std::swap(outdoor[i], outdoor[pick(rng)]);
    }
    outdoor.resize(n);
    std::sort(outdoor.begin(), outdoor.end());
    return {outdoor};
}

// One (map, transmitter) example with its ground-truth REM in dB.
struct Sample
{
    std::string map_id;
    geo::CityMap map;
    geo::TxSite tx;
    propagation::RadioMap rem;
    std::optional<Grid<std::uint8_t>> mask; // loss/metric pixels; all pixels when absent
};

using Dataset = std::vector<Sample>;

// ---------------------------------------------------------------------------------
// input assembly

inline int resolve_mode(LosKind los, int mode)
{
    if (los == LosKind::noLoS) {
        require(mode != 5, "input mode K=5 needs a LoS map; use K=2 for noLoS models");
        return 2;
    }
    require(mode == 3 || mode == 5, "LoS models need input mode K=3 or K=5");
    return mode;
}

inline std::size_t channel_count(int mode) { return static_cast<std::size_t>(mode); }

// Channel order:
//   K=2: Th, Bh
//   K=3: Th, Bh, Lf
//   K=5: B0, Bh, T0, Th, Lf
// Bh is the gray height image / 255, B0 and T0 are binary, Th carries the building
// height under the transmitter divided by 19.8 m at the transmitter pixel only.
inline Tensor assemble_input(int mode, const geo::CityMap &map, const geo::TxSite &tx,
                             const los::LosMap *lf = nullptr)
{
    require(mode == 2 || mode == 3 || mode == 5, "input mode K must be 2, 3 or 5");
    require(map.contains(tx.x, tx.y), "transmitter outside the map");
    require(mode == 2 || lf != nullptr, "input mode K=" + std::to_string(mode) + " requires a LoS map", "missing_los");
    const std::size_t w = map.width(), h = map.height();
    if (lf)
        require(lf->width() == w && lf->height() == h, "LoS map shape differs from the city map", "shape_mismatch");
    Tensor t({channel_count(mode), h, w});
    const auto gray = geo::height_image(map);
    const double th = map(tx.x, tx.y) / geo::max_building_height_m;
    auto fill_bh = [&](std::size_t c) {
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                t.at(c, y, x) = static_cast<double>(gray(x, y)) / 255.0;
    };
    auto fill_lf = [&](std::size_t c) {
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                t.at(c, y, x) = (*lf)(x, y);
    };
    const auto tx_x = static_cast<std::size_t>(tx.x), tx_y = static_cast<std::size_t>(tx.y);
    if (mode == 5) {
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                t.at(0, y, x) = map.is_building(x, y) ? 1.0 : 0.0;
        fill_bh(1);
        t.at(2, tx_y, tx_x) = 1.0;
        t.at(3, tx_y, tx_x) = th;
        fill_lf(4);
    } else {
        t.at(0, tx_y, tx_x) = th;
        fill_bh(1);
        if (mode == 3)
            fill_lf(2);
    }
    return t;
}

inline Tensor grid_to_tensor(const Grid<double> &g)
{
    return Tensor({1, g.height(), g.width()}, g.data());
}

inline Grid<double> tensor_to_grid(const Tensor &t)
{
    require(t.rank() == 3 && t.dim(0) == 1, "expected a single-channel tensor", "shape_mismatch");
    Grid<double> g(t.dim(2), t.dim(1));
    std::copy(t.values().begin(), t.values().end(), g.data().begin());
    return g;
}

// ---------------------------------------------------------------------------------
// dihedral-8 augmentation

// Transform index t in [0, 8): rotation by 90 * (t % 4) degrees counter-clockwise,
// followed by a horizontal flip when t >= 4. Index 0 is the identity.
inline Tensor dihedral(const Tensor &in, int t)
{
    require(in.rank() == 3 && in.dim(1) == in.dim(2), "dihedral transforms need square inputs", "shape_mismatch");
    require(t >= 0 && t < 8, "dihedral index must lie in [0, 8)");
    const std::size_t c = in.dim(0), n = in.dim(1);
    Tensor out(in.shape());
    const int rot = t % 4;
    const bool flip = t >= 4;
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                // destination (x, y) pulls from the source pixel mapped by the inverse transform
                std::size_t sx = flip ? n - 1 - x : x, sy = y;
                for (int r = 0; r < rot; ++r) {
                    const std::size_t nx = n - 1 - sy, ny = sx;
                    sx = nx;
                    sy = ny;
                }
                out.at(ch, y, x) = in.at(ch, sy, sx);
            }
    return out;
}

struct AugmentedPair
{
    Tensor input;
    Tensor target;
};

inline std::vector<AugmentedPair> dihedral8(const Tensor &input, const Tensor &target)
{
    require(input.rank() == 3 && target.rank() == 3 && input.dim(1) == target.dim(1) && input.dim(2) == target.dim(2),
            "input and target spatial shapes differ", "shape_mismatch");
    std::vector<AugmentedPair> out;
    out.reserve(8);
    for (int t = 0; t < 8; ++t)
        out.push_back({dihedral(input, t), dihedral(target, t)});
    return out;
}

// ---------------------------------------------------------------------------------
// density routing

inline constexpr double density_threshold = 0.25;

inline NetKind density_route(const geo::CityMap &map)
{
    return geo::building_density(map) >= density_threshold ? NetKind::UnetGE25 : NetKind::UnetLT25;
}

// ---------------------------------------------------------------------------------
// LoS preprocessing

inline los::LosMap nnlos_predict(const nn::UNetParams &f_los, const geo::CityMap &map, const geo::TxSite &tx)
{
    const Tensor in = assemble_input(2, map, tx);
    Grid<double> out = tensor_to_grid(nn::unet_forward(f_los, in));
    for (double &v : out)
        v = std::clamp(v, 0.0, 1.0);
    return out;
}

inline std::optional<los::LosMap> compute_los(LosKind kind, const geo::CityMap &map, const geo::TxSite &tx,
                                              const nn::UNetParams *f_los, unsigned threads = 0)
{
    switch (kind) {
    case LosKind::noLoS: return std::nullopt;
    case LosKind::PxLoS_f: return los::pxlos(map, tx, geo::default_rx_height_m, threads);
    case LosKind::AbLoS_f: return los::ablos(map, tx, threads);
    case LosKind::NNLoS_f:
        require(f_los != nullptr, "NNLoS_f needs a trained LoS predictor");
        return nnlos_predict(*f_los, map, tx);
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------------
// training

struct EpochRecord
{
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_rmse = 0.0;
};

struct TrainResult
{
    nn::UNetParams params;                  // mean net for KL training
    std::optional<nn::UNetParams> var_params; // variance net, KL training only
    std::vector<EpochRecord> trace;
    std::size_t train_examples = 0;         // after augmentation
    std::size_t val_examples = 0;
    double best_val_rmse = 0.0;
};

// A prepared example: assembled input, normalized target and optional pixel mask.
struct Example
{
    Tensor input;
    Tensor target;
    std::vector<std::uint8_t> mask; // empty = all pixels
};

namespace detail {

inline std::vector<std::uint8_t> mask_values(const std::optional<Grid<std::uint8_t>> &m)
{
    return m ? m->data() : std::vector<std::uint8_t>{};
}

// Split by map when the dataset spans several maps, otherwise by sample.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const Dataset &data,
                                                                                   double val_fraction,
                                                                                   std::uint64_t seed)
{
    std::vector<std::string> ids;
    for (const auto &s : data)
        if (std::find(ids.begin(), ids.end(), s.map_id) == ids.end())
            ids.push_back(s.map_id);
    std::mt19937_64 rng(seed ^ 0x5A17ULL);
    std::vector<std::size_t> train, val;
    if (ids.size() >= 2) {
        std::sort(ids.begin(), ids.end());
        std::shuffle(ids.begin(), ids.end(), rng);
        const auto nval = static_cast<std::size_t>(
            std::clamp<long>(round_half_away(val_fraction * static_cast<double>(ids.size())), 1,
                             static_cast<long>(ids.size()) - 1));
        const std::set<std::string> val_ids(ids.end() - static_cast<long>(nval), ids.end());
        for (std::size_t i = 0; i < data.size(); ++i)
            (val_ids.count(data[i].map_id) ? val : train).push_back(i);
    } else {
        require(data.size() >= 2, "training needs at least two samples");
        std::vector<std::size_t> idx(data.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto nval = static_cast<std::size_t>(
            std::clamp<long>(round_half_away(val_fraction * static_cast<double>(idx.size())), 1,
                             static_cast<long>(idx.size()) - 1));
        val.assign(idx.end() - static_cast<long>(nval), idx.end());
        train.assign(idx.begin(), idx.end() - static_cast<long>(nval));
        std::sort(val.begin(), val.end());
        std::sort(train.begin(), train.end());
    }
    return {train, val};
}

inline double masked_sq_error(const Tensor &pred, const Tensor &target, const std::vector<std::uint8_t> &mask,
                              std::size_t &count)
{
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask.empty() && !mask[i])
            continue;
        const double d = pred[i] - target[i];
        s += d * d;
        ++count;
    }
    return s;
}

struct SampleGrads
{
    double loss = 0.0;
    std::vector<Tensor> mean;
    std::vector<Tensor> var;
};

inline SampleGrads example_grads(const nn::UNetParams &mean_net, const nn::UNetParams *var_net, const Example &ex)
{
    SampleGrads g;
    const auto *mask = ex.mask.empty() ? nullptr : &ex.mask;
    nn::UNetCache mc;
    const Tensor mu = nn::unet_forward(mean_net, ex.input, &mc);
    if (!var_net) {
        const auto l = nn::mse_loss(mu, ex.target, mask);
        g.loss = l.loss;
        g.mean = nn::unet_backward(mean_net, mc, l.grad);
        return g;
    }
    nn::UNetCache vc;
    const Tensor s = nn::unet_forward(*var_net, ex.input, &vc);
    const auto l = nn::gaussian_nll_loss(mu, s, ex.target, mask);
    g.loss = l.loss;
    g.mean = nn::unet_backward(mean_net, mc, l.grad_mean);
    g.var = nn::unet_backward(*var_net, vc, l.grad_log_var);
    return g;
}

} // namespace detail

// Core optimisation loop shared by every training entry point. Trains one net (MSE) or
// the mean/variance pair (KL) with Adam; the returned parameters are those with the
// best validation RMSE. Per-batch gradients are computed per example (possibly in
// parallel) and summed in example order, so results do not depend on the thread count.
inline TrainResult fit(const std::vector<Example> &train, const std::vector<Example> &val, std::size_t in_channels,
                       LossKind loss, const TrainConfig &cfg)
{
    cfg.validate();
    require(!train.empty(), "empty training set", "empty_dataset");
    require(!val.empty(), "empty validation set", "empty_dataset");
    nn::UNetConfig ucfg{in_channels, cfg.depth, cfg.base_channels, 3};
    nn::UNetParams mean = nn::init_params(ucfg, cfg.seed);
    std::optional<nn::UNetParams> var;
    if (loss == LossKind::KL) {
        var = nn::init_params(ucfg, cfg.seed + 0x9E37ULL);
        // start the variance head at log sigma^2 = 0 with a small slope
        for (double &v : var->tensors[var->tensors.size() - 2].values())
            v *= 0.1;
    }
    nn::AdamState mean_state, var_state;
    const nn::AdamOptions opt{cfg.lr, 0.9, 0.999, 1e-8};

    TrainResult res;
    res.train_examples = train.size();
    res.val_examples = val.size();
    res.best_val_rmse = std::numeric_limits<double>::infinity();
    res.params = mean;
    if (var)
        res.var_params = var;

    std::mt19937_64 rng(cfg.seed ^ 0xC0FFEEULL);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
            const std::size_t bn = std::min(cfg.batch_size, order.size() - b0);
            std::vector<detail::SampleGrads> per(bn);
            parallel_for(
                bn, [&](std::size_t i) { per[i] = detail::example_grads(mean, var ? &*var : nullptr, train[order[b0 + i]]); },
                cfg.threads);
            std::vector<Tensor> gm = nn::zeros_like(mean.tensors), gv;
            if (var)
                gv = nn::zeros_like(var->tensors);
            double bl = 0.0;
            for (std::size_t i = 0; i < bn; ++i) {
                bl += per[i].loss;
                for (std::size_t t = 0; t < gm.size(); ++t)
                    gm[t] += per[i].mean[t];
                for (std::size_t t = 0; t < gv.size(); ++t)
                    gv[t] += per[i].var[t];
            }
            const double inv = 1.0 / static_cast<double>(bn);
            for (auto &t : gm)
                for (double &v : t.values())
                    v *= inv;
            for (auto &t : gv)
                for (double &v : t.values())
                    v *= inv;
            nn::adam_step(mean.tensors, gm, mean_state, opt);
            if (var)
                nn::adam_step(var->tensors, gv, var_state, opt);
            loss_sum += bl * inv;
            ++batches;
        }

        std::vector<double> sq(val.size(), 0.0);
        std::vector<std::size_t> cnt(val.size(), 0);
        parallel_for(
            val.size(),
            [&](std::size_t i) { sq[i] = detail::masked_sq_error(nn::unet_forward(mean, val[i].input), val[i].target, val[i].mask, cnt[i]); },
            cfg.threads);
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < val.size(); ++i) {
            s += sq[i];
            n += cnt[i];
        }
        const double rmse = n ? std::sqrt(s / static_cast<double>(n)) : 0.0;
        const double train_loss = loss_sum / static_cast<double>(batches);
        require(std::isfinite(train_loss) && std::isfinite(rmse),
                "training diverged at epoch " + std::to_string(epoch), "diverged");
        res.trace.push_back({epoch, train_loss, rmse});
        if (rmse < res.best_val_rmse) {
            res.best_val_rmse = rmse;
            res.params = mean;
            if (var)
                res.var_params = var;
        }
    }
    return res;
}

// Builds examples for a set of samples. LoS maps are computed per sample with the
// requested method; NNLoS uses the given predictor for training and test alike.
inline std::vector<Example> prepare_examples(const Dataset &data, const std::vector<std::size_t> &idx, int mode,
                                             LosKind los, const nn::UNetParams *f_los, bool augment,
                                             unsigned threads = 0)
{
    std::vector<std::vector<Example>> per(idx.size());
    parallel_for(
        idx.size(),
        [&](std::size_t i) {
            const Sample &s = data[idx[i]];
            require(s.rem.width() == s.map.width() && s.rem.height() == s.map.height(), "REM shape differs from map",
                    "shape_mismatch");
            const auto lf = compute_los(los, s.map, s.tx, f_los, 1);
            Example ex{assemble_input(mode, s.map, s.tx, lf ? &*lf : nullptr),
                       grid_to_tensor(propagation::normalize(s.rem)), detail::mask_values(s.mask)};
            if (!augment) {
                per[i].push_back(std::move(ex));
                return;
            }
            Tensor m;
            if (!ex.mask.empty()) {
                m = Tensor({1, s.map.height(), s.map.width()});
                for (std::size_t k = 0; k < ex.mask.size(); ++k)
                    m[k] = ex.mask[k];
            }
            for (int t = 0; t < 8; ++t) {
                Example a{dihedral(ex.input, t), dihedral(ex.target, t), {}};
                if (!ex.mask.empty()) {
                    const Tensor mt = dihedral(m, t);
                    a.mask.resize(mt.size());
                    for (std::size_t k = 0; k < mt.size(); ++k)
                        a.mask[k] = mt[k] != 0.0 ? 1 : 0;
                }
                per[i].push_back(std::move(a));
            }
        },
        threads);
    std::vector<Example> out;
    for (auto &v : per)
        for (auto &e : v)
            out.push_back(std::move(e));
    return out;
}

inline Dataset filter_by_route(const Dataset &data, NetKind net)
{
    if (net == NetKind::Unet)
        return data;
    Dataset out;
    for (const auto &s : data)
        if (density_route(s.map) == net)
            out.push_back(s);
    return out;
}

// LoS predictor F_LoS: (Th | Bh) -> Lf with PxLoS labels, MSE loss.
inline TrainResult train_nnlos(const Dataset &data, const TrainConfig &cfg)
{
    require(!data.empty(), "empty dataset", "empty_dataset");
    auto [tr, va] = detail::split_indices(data, cfg.val_fraction, cfg.seed);
    auto build = [&](const std::vector<std::size_t> &idx) {
        std::vector<Example> out(idx.size());
        parallel_for(
            idx.size(),
            [&](std::size_t i) {
                const Sample &s = data[idx[i]];
                out[i] = {assemble_input(2, s.map, s.tx), grid_to_tensor(los::pxlos(s.map, s.tx, geo::default_rx_height_m, 1)), {}};
            },
            cfg.threads);
        return out;
    };
    return fit(build(tr), build(va), 2, LossKind::MSE, cfg);
}

// Trains one REM model. Density-specific nets only see maps routed to them.
inline TrainResult train_rem(const Dataset &dataset, const ModelSpec &spec, const TrainConfig &cfg,
                             const nn::UNetParams *f_los = nullptr)
{
    cfg.validate();
    const Dataset data = filter_by_route(dataset, spec.net);
    require(!data.empty(), std::string("no training maps for ") + to_string(spec.net), "empty_dataset");
    const int mode = resolve_mode(spec.los, cfg.input_mode);
    auto [tr, va] = detail::split_indices(data, cfg.val_fraction, cfg.seed);
    const bool augment = spec.aug == Aug::DAug;
    const auto train = prepare_examples(data, tr, mode, spec.los, f_los, augment, cfg.threads);
    const auto val = prepare_examples(data, va, mode, spec.los, f_los, false, cfg.threads);
    return fit(train, val, channel_count(mode), spec.loss, cfg);
}

// Mean/variance twin under the Gaussian NLL loss.
inline TrainResult train_kl(const Dataset &data, ModelSpec spec, const TrainConfig &cfg,
                            const nn::UNetParams *f_los = nullptr)
{
    spec.loss = LossKind::KL;
    return train_rem(data, spec, cfg, f_los);
}

// Loss and validation restricted to the mask pixels of every sample.
inline TrainResult train_masked(Dataset data, const SampleMask &mask, const ModelSpec &spec, const TrainConfig &cfg,
                                const nn::UNetParams *f_los = nullptr)
{
    for (auto &s : data) {
        mask.validate(s.map);
        s.mask = mask.to_grid(s.map.width(), s.map.height());
    }
    return train_rem(data, spec, cfg, f_los);
}

// ---------------------------------------------------------------------------------
// trained model bundle and prediction

// Everything prediction needs. Density-routed models hold both nets; the KL variance
// net is not part of the bundle.
struct RemModel
{
    ModelSpec spec;
    int input_mode = 3;
    std::optional<nn::UNetParams> unet;
    std::optional<nn::UNetParams> unet_ge25;
    std::optional<nn::UNetParams> unet_lt25;
    std::optional<nn::UNetParams> f_los;

    const nn::UNetParams &net_for(const geo::CityMap &map) const
    {
        if (spec.net == NetKind::Unet) {
            require(unet.has_value(), "model has no u-net");
            return *unet;
        }
        const NetKind route = density_route(map);
        const auto &slot = route == NetKind::UnetGE25 ? unet_ge25 : unet_lt25;
        require(slot.has_value(), std::string("model has no ") + to_string(route) + " net for this map");
        return *slot;
    }
};

struct PredictTiming
{
    double preprocess_ms = 0.0;
    double forward_ms = 0.0;
};

// Normalized prediction in [0, 1] before de-normalization.
inline Grid<double> predict_normalized(const RemModel &model, const geo::CityMap &map, const geo::TxSite &tx,
                                       PredictTiming *timing = nullptr, unsigned threads = 1)
{
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const int mode = resolve_mode(model.spec.los, model.input_mode);
    const auto lf = compute_los(model.spec.los, map, tx, model.f_los ? &*model.f_los : nullptr, threads);
    const Tensor in = assemble_input(mode, map, tx, lf ? &*lf : nullptr);
    const auto t1 = clock::now();
    Grid<double> out = tensor_to_grid(nn::unet_forward(model.net_for(map), in));
    const auto t2 = clock::now();
    if (timing) {
        timing->preprocess_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        timing->forward_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
    }
    return out;
}

inline propagation::RadioMap predict(const RemModel &model, const geo::CityMap &map, const geo::TxSite &tx,
                                     PredictTiming *timing = nullptr, unsigned threads = 1)
{
    Grid<double> out = predict_normalized(model, map, tx, timing, threads);
    for (double &v : out)
        v = propagation::clamp_gain(propagation::denormalize_gain(v));
    return out;
}

inline Dataset make_dataset(const std::vector<geo::MapBundle> &bundles, const propagation::PropagationParams &p,
                            unsigned threads = 0)
{
    Dataset out;
    for (const auto &b : bundles)
        for (const auto &tx : b.transmitters)
            out.push_back({b.map_id, b.map, tx, propagation::RadioMap{}, std::nullopt});
    parallel_for(
        out.size(), [&](std::size_t i) { out[i].rem = propagation::oracle_rem(out[i].map, out[i].tx, p, 1); },
        threads);
    return out;
}

// Trains everything a ModelSpec needs: the LoS predictor for NNLoS_f, both density-routed
// nets for a density-specific net, the KL twin for the KL loss.
struct TrainedBundle
{
    RemModel model;
    std::vector<std::pair<std::string, TrainResult>> runs; // label -> run (params moved into model)
};

inline TrainedBundle train_model(const Dataset &data, const ModelSpec &spec, const TrainConfig &cfg,
                                 const TrainConfig *nnlos_cfg = nullptr)
{
    TrainedBundle b;
    b.model.spec = spec;
    b.model.input_mode = resolve_mode(spec.los, cfg.input_mode);
    if (spec.los == LosKind::NNLoS_f) {
        TrainConfig lc = nnlos_cfg ? *nnlos_cfg : cfg;
        if (!nnlos_cfg)
            lc.lr = 1e-4;
        auto r = train_nnlos(data, lc);
        b.model.f_los = r.params;
        b.runs.emplace_back("nnlos", std::move(r));
    }
    const nn::UNetParams *f_los = b.model.f_los ? &*b.model.f_los : nullptr;
    if (spec.net == NetKind::Unet) {
        auto r = train_rem(data, spec, cfg, f_los);
        b.model.unet = r.params;
        b.runs.emplace_back("unet", std::move(r));
    } else {
        for (NetKind k : {NetKind::UnetGE25, NetKind::UnetLT25}) {
            if (filter_by_route(data, k).empty())
                continue;
            ModelSpec s = spec;
            s.net = k;
            auto r = train_rem(data, s, cfg, f_los);
            (k == NetKind::UnetGE25 ? b.model.unet_ge25 : b.model.unet_lt25) = r.params;
            b.runs.emplace_back(to_string(k), std::move(r));
        }
        require(b.model.unet_ge25 || b.model.unet_lt25, "no maps for either density route", "empty_dataset");
    }
    return b;
}

} // namespace remforge::pipeline

#endif
