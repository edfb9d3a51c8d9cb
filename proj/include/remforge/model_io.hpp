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

// A trained REM model as one weight file. The header's `extra` block names the model
// spec, the input mode and the role of every stored parameter set:
//   unet | unet_ge25 | unet_lt25   REM nets
//   f_los                          LoS predictor for NNLoS_f
//   var                            variance net of a KL twin (not used for prediction)

#ifndef REMFORGE_MODEL_IO_HPP
#define REMFORGE_MODEL_IO_HPP

#include "nn/io.hpp"
#include "pipeline.hpp"

namespace remforge::model_io {

inline void save_model(const std::filesystem::path &path, const pipeline::RemModel &m,
                       const nn::UNetParams *var_net = nullptr)
{
    std::vector<const nn::UNetParams *> sets;
    nlohmann::json roles = nlohmann::json::array();
    auto add = [&](const std::optional<nn::UNetParams> &p, const char *role) {
        if (p) {
            sets.push_back(&*p);
            roles.push_back(role);
        }
    };
    add(m.unet, "unet");
    add(m.unet_ge25, "unet_ge25");
    add(m.unet_lt25, "unet_lt25");
    add(m.f_los, "f_los");
    if (var_net) {
        sets.push_back(var_net);
        roles.push_back("var");
    }
    require(!sets.empty(), "model has no parameters to save");
    nn::save_params(path, sets,
                    {{"kind", "rem_model"},
                     {"spec", pipeline::to_string(m.spec)},
                     {"input_mode", m.input_mode},
                     {"roles", roles}});
}

struct LoadedModel
{
    pipeline::RemModel model;
    std::optional<nn::UNetParams> var_net;
};

inline LoadedModel load_model(const std::filesystem::path &path)
{
    auto d = nn::load_params_file(path);
    LoadedModel out;
    try {
        require(d.extra.value("kind", std::string{}) == "rem_model", path.string() + " is not a REM model file",
                "format");
        out.model.spec = pipeline::parse_spec(d.extra.at("spec").get<std::string>());
        out.model.input_mode = d.extra.at("input_mode").get<int>();
        const auto &roles = d.extra.at("roles");
        require(roles.size() == d.sets.size(), "role list does not match the stored nets", "format");
        for (std::size_t i = 0; i < d.sets.size(); ++i) {
            const auto role = roles[i].get<std::string>();
            auto &p = d.sets[i];
            if (role == "unet")
                out.model.unet = std::move(p);
            else if (role == "unet_ge25")
                out.model.unet_ge25 = std::move(p);
            else if (role == "unet_lt25")
                out.model.unet_lt25 = std::move(p);
            else if (role == "f_los")
                out.model.f_los = std::move(p);
            else if (role == "var")
                out.var_net = std::move(p);
            else
                throw Error("format", "unknown net role '" + role + "'");
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error("format", path.string() + ": " + e.what());
    }
    return out;
}

} // namespace remforge::model_io

#endif
