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

#ifndef REMFORGE_TIMING_HPP
#define REMFORGE_TIMING_HPP

#include "metrics.hpp"
#include "pipeline.hpp"

namespace remforge::timing {

// Per-REM prediction time of one model, split into preprocessing (LoS map and input
// stack) and the u-net forward pass. Everything runs on one thread.
inline metrics::MethodTiming time_prediction(const pipeline::RemModel &model, const geo::CityMap &map,
                                             const geo::TxSite &tx, std::size_t runs = 5, std::size_t warmup = 1)
{
    const int mode = pipeline::resolve_mode(model.spec.los, model.input_mode);
    const nn::UNetParams *f_los = model.f_los ? &*model.f_los : nullptr;
    nn::Tensor input;
    auto pre = metrics::time_stage(
        "preprocess",
        [&] {
            const auto lf = pipeline::compute_los(model.spec.los, map, tx, f_los, 1);
            input = pipeline::assemble_input(mode, map, tx, lf ? &*lf : nullptr);
        },
        runs, warmup);
    const nn::UNetParams &net = model.net_for(map);
    auto fwd = metrics::time_stage("forward", [&] { (void)nn::unet_forward(net, input); }, runs, warmup);
    return {pipeline::to_string(model.spec.los), std::move(pre), std::move(fwd)};
}

// LoS computation alone, one thread.
inline metrics::StageTiming time_los(pipeline::LosKind kind, const geo::CityMap &map, const geo::TxSite &tx,
                                     const nn::UNetParams *f_los = nullptr, std::size_t runs = 5,
                                     std::size_t warmup = 1)
{
    return metrics::time_stage(
        pipeline::to_string(kind), [&] { (void)pipeline::compute_los(kind, map, tx, f_los, 1); }, runs, warmup);
}

// An untrained model of the given spec, enough to time the forward pass.
inline pipeline::RemModel untrained_model(const pipeline::ModelSpec &spec, const nn::UNetConfig &arch,
                                          std::uint64_t seed = 1)
{
    pipeline::RemModel m;
    m.spec = spec;
    m.input_mode = pipeline::resolve_mode(spec.los, static_cast<int>(arch.in_channels == 5 ? 5 : 3));
    nn::UNetConfig c = arch;
    c.in_channels = static_cast<std::size_t>(m.input_mode);
    m.unet = nn::init_params(c, seed);
    m.unet_ge25 = m.unet;
    m.unet_lt25 = m.unet;
    if (spec.los == pipeline::LosKind::NNLoS_f) {
        nn::UNetConfig lc = arch;
        lc.in_channels = 2;
        m.f_los = nn::init_params(lc, seed + 1);
    }
    return m;
}

} // namespace remforge::timing

#endif
