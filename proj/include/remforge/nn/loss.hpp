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

#ifndef REMFORGE_NN_LOSS_HPP
#define REMFORGE_NN_LOSS_HPP

#include "tensor.hpp"

#include <cmath>
#include <cstdint>

namespace remforge::nn {

struct LossResult
{
    double loss = 0.0;
    Tensor grad;
};

struct GaussianLossResult
{
    double loss = 0.0;
    Tensor grad_mean;
    Tensor grad_log_var;
};

namespace detail {

// Pixel weights: all ones, or the 0/1 mask. Returns the number of active pixels.
inline std::size_t active_count(std::size_t n, const std::vector<std::uint8_t> *mask)
{
    if (!mask)
        return n;
    require(mask->size() == n, "loss mask size mismatch", "shape_mismatch");
    std::size_t k = 0;
    for (auto m : *mask)
        k += m ? 1 : 0;
    return k;
}

} // namespace detail

// Mean squared error over the active pixels (all, or those where mask != 0).
inline LossResult mse_loss(const Tensor &pred, const Tensor &target, const std::vector<std::uint8_t> *mask = nullptr)
{
    require(pred.shape() == target.shape(), "mse_loss: shape mismatch", "shape_mismatch");
    const std::size_t n = detail::active_count(pred.size(), mask);
    LossResult r{0.0, Tensor(pred.shape())};
    if (n == 0)
        return r;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (mask && !(*mask)[i])
            continue;
        const double d = pred[i] - target[i];
        r.loss += d * d;
        r.grad[i] = 2.0 * d * inv;
    }
    r.loss *= inv;
    return r;
}

// Gaussian negative log-likelihood with the variance head predicting s = log sigma^2:
// per pixel 0.5 * ((y - mu)^2 * exp(-s) + s), averaged over active pixels. Pixels with
// large predicted variance contribute less to the residual term.
inline GaussianLossResult gaussian_nll_loss(const Tensor &mean, const Tensor &log_var, const Tensor &target,
                                            const std::vector<std::uint8_t> *mask = nullptr)
{
    require(mean.shape() == target.shape() && log_var.shape() == target.shape(), "gaussian_nll_loss: shape mismatch",
            "shape_mismatch");
    const std::size_t n = detail::active_count(mean.size(), mask);
    GaussianLossResult r{0.0, Tensor(mean.shape()), Tensor(mean.shape())};
    if (n == 0)
        return r;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < mean.size(); ++i) {
        if (mask && !(*mask)[i])
            continue;
        const double d = target[i] - mean[i];
        const double prec = std::exp(-log_var[i]);
        r.loss += 0.5 * (d * d * prec + log_var[i]);
        r.grad_mean[i] = -d * prec * inv;
        r.grad_log_var[i] = 0.5 * (1.0 - d * d * prec) * inv;
    }
    r.loss *= inv;
    return r;
}

} // namespace remforge::nn

#endif
