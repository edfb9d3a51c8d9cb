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

#ifndef REMFORGE_NN_ADAM_HPP
#define REMFORGE_NN_ADAM_HPP

#include "tensor.hpp"

#include <cmath>

namespace remforge::nn {

struct AdamOptions
{
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState
{
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long step = 0;
};

// One Adam update with bias correction, in place over a parameter list.
inline void adam_step(std::vector<Tensor> &params, const std::vector<Tensor> &grads, AdamState &state,
                      const AdamOptions &opt = {})
{
    require(params.size() == grads.size(), "adam_step: parameter and gradient counts differ", "shape_mismatch");
    if (state.m.empty()) {
        for (const auto &p : params) {
            state.m.emplace_back(p.shape());
            state.v.emplace_back(p.shape());
        }
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        require(params[t].shape() == grads[t].shape(), "adam_step: gradient shape mismatch", "shape_mismatch");
        double *p = params[t].data();
        const double *g = grads[t].data();
        double *m = state.m[t].data();
        double *v = state.v[t].data();
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            const double mh = m[i] / c1, vh = v[i] / c2;
            p[i] -= opt.lr * mh / (std::sqrt(vh) + opt.eps);
        }
    }
}

} // namespace remforge::nn

#endif
