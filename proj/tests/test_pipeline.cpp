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

#include "remforge/pipeline.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace remforge;
using nn::Tensor;
namespace pl = remforge::pipeline;
namespace rt = remforge::testing;

namespace {

pl::Dataset tiny_dataset(std::size_t maps = 4, std::size_t size = 16, std::size_t tx = 2)
{
    std::vector<geo::MapBundle> bundles;
    for (std::size_t i = 0; i < maps; ++i)
        bundles.push_back(geo::generate_bundle(300 + i, size, i % 2 ? 0.2 : 0.35, tx, "t" + std::to_string(i)));
    return pl::make_dataset(bundles, {}, 1);
}

pl::TrainConfig tiny_config()
{
    pl::TrainConfig c;
    c.lr = 1e-3;
    c.epochs = 2;
    c.batch_size = 2;
    c.depth = 2;
    c.base_channels = 2;
    c.val_fraction = 0.25;
    return c;
}

} // namespace

TEST(Spec, ParseAndPrintRoundTrip)
{
    for (auto a : {pl::Aug::DAug, pl::Aug::noDAug})
        for (auto l : {pl::LosKind::noLoS, pl::LosKind::PxLoS_f, pl::LosKind::AbLoS_f, pl::LosKind::NNLoS_f})
            for (auto n : {pl::NetKind::Unet, pl::NetKind::UnetGE25, pl::NetKind::UnetLT25})
                for (auto s : {pl::LossKind::MSE, pl::LossKind::KL}) {
                    const pl::ModelSpec spec{a, l, n, s};
                    EXPECT_EQ(pl::parse_spec(pl::to_string(spec)), spec);
                }
    EXPECT_EQ(pl::parse_spec(" M( DAug ,AbLoS_f, UnetGE25 , KL ) ").los, pl::LosKind::AbLoS_f);
    EXPECT_THROW(pl::parse_spec("M(DAug, PxLoS_f, Unet)"), Error);
    EXPECT_THROW(pl::parse_spec("N(DAug, PxLoS_f, Unet, MSE)"), Error);
    EXPECT_THROW(pl::parse_spec("M(DAug, Bogus, Unet, MSE)"), Error);
}

TEST(Input, ModesAndChannelOrder)
{
    const auto b = geo::generate_bundle(1, 32, 0.3, 1, "m");
    const auto &tx = b.transmitters[0];
    const auto lf = los::pxlos(b.map, tx);
    const double th = b.map(tx.x, tx.y) / 19.8;

    const Tensor k2 = pl::assemble_input(2, b.map, tx);
    ASSERT_EQ(k2.shape(), (nn::Shape{2, 32, 32}));
    const Tensor k3 = pl::assemble_input(3, b.map, tx, &lf);
    const Tensor k5 = pl::assemble_input(5, b.map, tx, &lf);
    ASSERT_EQ(k5.shape(), (nn::Shape{5, 32, 32}));
    for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
            const bool at_tx = static_cast<long>(x) == tx.x && static_cast<long>(y) == tx.y;
            const double bh = geo::height_gray(b.map(x, y)) / 255.0;
            EXPECT_EQ(k2.at(0, y, x), at_tx ? th : 0.0);
            EXPECT_EQ(k2.at(1, y, x), bh);
            EXPECT_EQ(k3.at(2, y, x), lf(x, y));
            EXPECT_EQ(k5.at(0, y, x), b.map.is_building(x, y) ? 1.0 : 0.0);
            EXPECT_EQ(k5.at(1, y, x), bh);
            EXPECT_EQ(k5.at(2, y, x), at_tx ? 1.0 : 0.0);
            EXPECT_EQ(k5.at(3, y, x), at_tx ? th : 0.0);
            EXPECT_EQ(k5.at(4, y, x), lf(x, y));
        }
    EXPECT_THROW(pl::assemble_input(3, b.map, tx), Error);
    EXPECT_THROW(pl::assemble_input(4, b.map, tx, &lf), Error);
    EXPECT_EQ(pl::resolve_mode(pl::LosKind::noLoS, 3), 2);
    EXPECT_THROW(pl::resolve_mode(pl::LosKind::noLoS, 5), Error);
    EXPECT_THROW(pl::resolve_mode(pl::LosKind::PxLoS_f, 2), Error);
}

TEST(Dihedral, GroupClosureAndDistinctness)
{
    std::mt19937_64 rng(3);
    const Tensor x = rt::random_tensor(rng, {2, 5, 5});
    std::vector<Tensor> images;
    for (int t = 0; t < 8; ++t)
        images.push_back(pl::dihedral(x, t));
    EXPECT_EQ(images[0], x);
    for (int a = 0; a < 8; ++a)
        for (int b = a + 1; b < 8; ++b)
            EXPECT_FALSE(images[a] == images[b]) << a << " vs " << b;
    for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
            const Tensor ab = pl::dihedral(pl::dihedral(x, a), b);
            int hits = 0;
            for (const auto &img : images)
                hits += img == ab;
            EXPECT_EQ(hits, 1) << a << " then " << b;
        }
}

TEST(Dihedral, RotationAndFlipGeometry)
{
    // 2 x 2 image [a b; c d], rows top to bottom
    const Tensor x({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    EXPECT_EQ(rt::to_vector(pl::dihedral(x, 1)), (std::vector<double>{2, 4, 1, 3})); // 90 deg counter-clockwise
    EXPECT_EQ(rt::to_vector(pl::dihedral(x, 2)), (std::vector<double>{4, 3, 2, 1}));
    EXPECT_EQ(rt::to_vector(pl::dihedral(x, 4)), (std::vector<double>{2, 1, 4, 3})); // horizontal flip
    EXPECT_THROW(pl::dihedral(Tensor({1, 2, 3}), 1), Error);
    EXPECT_THROW(pl::dihedral(x, 8), Error);
}

TEST(Dihedral, AugmentationMultipliesExamplesByEight)
{
    const auto data = tiny_dataset(3, 16, 2);
    const std::vector<std::size_t> idx{0, 1, 2, 3, 4};
    const auto plain = pl::prepare_examples(data, idx, 3, pl::LosKind::PxLoS_f, nullptr, false, 1);
    const auto aug = pl::prepare_examples(data, idx, 3, pl::LosKind::PxLoS_f, nullptr, true, 1);
    EXPECT_EQ(plain.size(), 5u);
    EXPECT_EQ(aug.size(), 40u);
    for (std::size_t i = 0; i < plain.size(); ++i)
        EXPECT_EQ(aug[8 * i].input, plain[i].input);
}

TEST(Routing, DensityThreshold)
{
    Grid<double> g(4, 4, 0.0);
    for (std::size_t x = 0; x < 4; ++x)
        g(x, 0) = 6.6; // exactly 25 %
    EXPECT_EQ(pl::density_route(geo::CityMap(g)), pl::NetKind::UnetGE25);
    g(3, 0) = 0.0;
    EXPECT_EQ(pl::density_route(geo::CityMap(g)), pl::NetKind::UnetLT25);
}

TEST(Mask, RandomOutdoorMaskProperties)
{
    const auto b = geo::generate_bundle(4, 32, 0.3, 1, "m");
    const auto m = pl::random_outdoor_mask(b.map, 0.15, 9);
    EXPECT_EQ(m.pixels.size(), static_cast<std::size_t>(std::lround(0.15 * 32 * 32)));
    EXPECT_TRUE(std::is_sorted(m.pixels.begin(), m.pixels.end()));
    EXPECT_EQ(std::set(m.pixels.begin(), m.pixels.end()).size(), m.pixels.size());
    EXPECT_NO_THROW(m.validate(b.map));
    EXPECT_EQ(m.pixels, pl::random_outdoor_mask(b.map, 0.15, 9).pixels);
    EXPECT_NE(m.pixels, pl::random_outdoor_mask(b.map, 0.15, 10).pixels);
    pl::SampleMask bad{{{0, 0}, {40, 1}}};
    EXPECT_THROW(bad.validate(b.map), Error);
}

TEST(Split, ByMapWithoutLeakage)
{
    const auto data = tiny_dataset(5, 16, 2);
    for (std::uint64_t seed = 1; seed < 6; ++seed) {
        auto [tr, va] = pl::detail::split_indices(data, 0.2, seed);
        EXPECT_EQ(tr.size() + va.size(), data.size());
        std::set<std::string> tm, vm;
        for (auto i : tr)
            tm.insert(data[i].map_id);
        for (auto i : va)
            vm.insert(data[i].map_id);
        EXPECT_EQ(vm.size(), 1u);
        for (const auto &id : vm)
            EXPECT_EQ(tm.count(id), 0u);
    }
}

TEST(Training, DeterministicAndThreadCountIndependent)
{
    const auto data = tiny_dataset();
    auto cfg = tiny_config();
    const pl::ModelSpec spec{pl::Aug::noDAug, pl::LosKind::AbLoS_f, pl::NetKind::Unet, pl::LossKind::MSE};
    cfg.threads = 1;
    const auto a = pl::train_rem(data, spec, cfg);
    cfg.threads = 3;
    const auto b = pl::train_rem(data, spec, cfg);
    EXPECT_EQ(a.params, b.params);
    ASSERT_EQ(a.trace.size(), 2u);
    EXPECT_EQ(a.trace[1].val_rmse, b.trace[1].val_rmse);
    EXPECT_EQ(a.best_val_rmse, std::min(a.trace[0].val_rmse, a.trace[1].val_rmse));
}

TEST(Training, AugmentationCountsAreEightfold)
{
    const auto data = tiny_dataset();
    auto cfg = tiny_config();
    cfg.epochs = 1;
    const auto plain = pl::train_rem(data, {pl::Aug::noDAug, pl::LosKind::PxLoS_f, pl::NetKind::Unet, pl::LossKind::MSE}, cfg);
    const auto aug = pl::train_rem(data, {pl::Aug::DAug, pl::LosKind::PxLoS_f, pl::NetKind::Unet, pl::LossKind::MSE}, cfg);
    EXPECT_EQ(aug.train_examples, 8 * plain.train_examples);
    EXPECT_EQ(aug.val_examples, plain.val_examples);
}

TEST(Training, MaskedLossIgnoresUnmaskedTargets)
{
    auto data = tiny_dataset();
    auto cfg = tiny_config();
    const pl::ModelSpec spec{pl::Aug::DAug, pl::LosKind::PxLoS_f, pl::NetKind::Unet, pl::LossKind::MSE};
    const auto mask = pl::random_outdoor_mask(data[0].map, 0.2, 5);
    // maps differ, so use a mask valid on every map: the outdoor pixels common to all
    pl::SampleMask common;
    for (auto p : mask.pixels) {
        bool ok = true;
        for (const auto &s : data)
            ok = ok && !s.map.is_building(static_cast<std::size_t>(p.first), static_cast<std::size_t>(p.second));
        if (ok)
            common.pixels.push_back(p);
    }
    ASSERT_FALSE(common.pixels.empty());
    const auto a = pl::train_masked(data, common, spec, cfg);
    const auto grid = common.to_grid(16, 16);
    for (auto &s : data)
        for (std::size_t i = 0; i < s.rem.size(); ++i)
            if (!grid.data()[i])
                s.rem.data()[i] = -111.0;
    const auto b = pl::train_masked(data, common, spec, cfg);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.best_val_rmse, b.best_val_rmse);
}

TEST(Training, KlPredictionUsesOnlyTheMeanNet)
{
    const auto data = tiny_dataset();
    const pl::ModelSpec spec{pl::Aug::noDAug, pl::LosKind::PxLoS_f, pl::NetKind::Unet, pl::LossKind::KL};
    auto trained = pl::train_model(data, spec, tiny_config());
    const auto &run = trained.runs.back().second;
    ASSERT_TRUE(run.var_params.has_value());
    for (const auto &e : run.trace) {
        EXPECT_TRUE(std::isfinite(e.train_loss));
        EXPECT_TRUE(std::isfinite(e.val_rmse));
    }
    const auto var_calls = run.var_params->forward_calls.value();
    const auto mean_calls = trained.model.unet->forward_calls.value();
    const auto &s = data[0];
    const auto pred = pl::predict_normalized(trained.model, s.map, s.tx);
    EXPECT_EQ(run.var_params->forward_calls.value(), var_calls);
    EXPECT_EQ(trained.model.unet->forward_calls.value(), mean_calls + 1);
    const auto lf = los::pxlos(s.map, s.tx);
    const auto direct = pl::tensor_to_grid(nn::unet_forward(*trained.model.unet, pl::assemble_input(3, s.map, s.tx, &lf)));
    EXPECT_EQ(pred, direct);
}

TEST(Training, DensityRoutedTwinsAndNnLos)
{
    const auto data = tiny_dataset(6);
    auto cfg = tiny_config();
    cfg.epochs = 1;
    const auto routed = pl::train_model(
        data, {pl::Aug::noDAug, pl::LosKind::NNLoS_f, pl::NetKind::UnetGE25, pl::LossKind::MSE}, cfg);
    EXPECT_TRUE(routed.model.f_los.has_value());
    EXPECT_TRUE(routed.model.unet_ge25.has_value());
    EXPECT_TRUE(routed.model.unet_lt25.has_value());
    EXPECT_FALSE(routed.model.unet.has_value());
    ASSERT_EQ(routed.runs.size(), 3u);
    EXPECT_EQ(routed.runs[0].first, "nnlos");
    for (const auto &s : data) {
        const auto rem = pl::predict(routed.model, s.map, s.tx);
        for (double v : rem) {
            EXPECT_GE(v, -111.0);
            EXPECT_LE(v, -75.0);
        }
        const auto &net = routed.model.net_for(s.map);
        EXPECT_EQ(&net, pl::density_route(s.map) == pl::NetKind::UnetGE25 ? &*routed.model.unet_ge25
                                                                        : &*routed.model.unet_lt25);
    }
}

TEST(Training, EmptyAndInvalidInputs)
{
    auto cfg = tiny_config();
    EXPECT_THROW(pl::train_rem({}, {}, cfg), Error);
    cfg.lr = 0.0;
    EXPECT_THROW(pl::train_rem(tiny_dataset(), {}, cfg), Error);
    cfg = tiny_config();
    cfg.input_mode = 4;
    EXPECT_THROW(cfg.validate(), Error);
}
