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

// Cell-free massive MIMO AP switch-on by predicted large-scale fading.
//
// A UE that needs k more APs wakes the k sleep APs with the highest predicted path gain
// at its location. Selections made from predicted REMs are scored against the same
// rule applied to the true REMs.

#ifndef REMFORGE_ASO_HPP
#define REMFORGE_ASO_HPP

#include "metrics.hpp"
#include "pipeline.hpp"

#include "json.hpp"

#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace remforge::aso {

using RemSet = std::map<std::size_t, propagation::RadioMap>; // AP index -> REM in dB

struct CfNetwork
{
    geo::CityMap map;
    std::vector<geo::TxSite> aps;
    std::vector<std::size_t> active; // indices into aps
    std::vector<std::size_t> sleep;

    void validate() const
    {
        require(!active.empty(), "the network needs at least one active AP");
        std::vector<int> seen(aps.size(), 0);
        for (auto v : {&active, &sleep})
            for (std::size_t i : *v) {
                require(i < aps.size(), "AP index " + std::to_string(i) + " out of range");
                ++seen[i];
            }
        for (std::size_t i = 0; i < aps.size(); ++i)
            require(seen[i] == 1, "AP " + std::to_string(i) + " must be in exactly one of the active and sleep sets");
        for (const auto &ap : aps)
            require(geo::is_valid_site(map, ap), "AP outside the map or not above a rooftop");
    }
};

// Random split of the APs into `n_sleep` sleep APs and the rest active; both lists sorted.
inline CfNetwork make_network(geo::CityMap map, std::vector<geo::TxSite> aps, std::size_t n_sleep, std::uint64_t seed)
{
    require(n_sleep < aps.size(), "at least one AP must stay active");
    std::vector<std::size_t> idx(aps.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    CfNetwork net{std::move(map), std::move(aps), {}, {}};
    net.sleep.assign(idx.begin(), idx.begin() + static_cast<long>(n_sleep));
    net.active.assign(idx.begin() + static_cast<long>(n_sleep), idx.end());
    std::sort(net.sleep.begin(), net.sleep.end());
    std::sort(net.active.begin(), net.active.end());
    net.validate();
    return net;
}

struct UeDemand
{
    long x = 0;
    long y = 0;
    std::size_t k_extra = 1;
};

// Sleep APs ordered by gain at the UE pixel, highest first, ties by AP index; the first
// k_extra are returned.
inline std::vector<std::size_t> mpl_aso_select(const CfNetwork &net, const UeDemand &ue, const RemSet &rems)
{
    require(ue.k_extra >= 1, "a UE needs at least one extra AP");
    require(ue.k_extra <= net.sleep.size(),
            "UE needs " + std::to_string(ue.k_extra) + " APs but only " + std::to_string(net.sleep.size()) + " sleep");
    require(net.map.contains(ue.x, ue.y), "UE outside the map");
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(net.sleep.size());
    for (std::size_t ap : net.sleep) {
        const auto it = rems.find(ap);
        require(it != rems.end(), "no REM for sleep AP " + std::to_string(ap));
        ranked.emplace_back(it->second(static_cast<std::size_t>(ue.x), static_cast<std::size_t>(ue.y)), ap);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto &a, const auto &b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ue.k_extra; ++i)
        out.push_back(ranked[i].second);
    return out;
}

// Brute-force reference selection from the true REMs.
inline std::vector<std::size_t> true_topk(const CfNetwork &net, const UeDemand &ue, const RemSet &true_rems)
{
    return mpl_aso_select(net, ue, true_rems);
}

inline double binomial(std::size_t n, std::size_t k)
{
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i)
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

// Expected error (percent) of drawing the k-set uniformly at random.
inline double random_selection_error(std::size_t n_sleep, std::size_t k)
{
    require(k >= 1 && k <= n_sleep, "k must lie in 1..n_sleep");
    return 100.0 * (1.0 - 1.0 / binomial(n_sleep, k));
}

inline std::vector<std::pair<long, long>> outdoor_locations(const geo::CityMap &map)
{
    std::vector<std::pair<long, long>> out;
    for (std::size_t y = 0; y < map.height(); ++y)
        for (std::size_t x = 0; x < map.width(); ++x)
            if (!map.is_building(x, y))
                out.emplace_back(static_cast<long>(x), static_cast<long>(y));
    return out;
}

struct KResult
{
    std::size_t k = 0;
    double error_pct = 0.0;
    double random_pct = 0.0;
    std::size_t locations = 0;
};

// AP selection error for each k over the given UE locations.
inline std::vector<KResult> selection_errors(const CfNetwork &net, const std::vector<std::size_t> &ks,
                                             const RemSet &predicted, const RemSet &truth,
                                             const std::vector<std::pair<long, long>> &locations)
{
    require(!locations.empty(), "no UE locations to evaluate", "empty_dataset");
    std::vector<KResult> out;
    for (std::size_t k : ks) {
        std::vector<std::vector<std::size_t>> t(locations.size()), e(locations.size());
        parallel_for(locations.size(), [&](std::size_t i) {
            const UeDemand ue{locations[i].first, locations[i].second, k};
            t[i] = true_topk(net, ue, truth);
            e[i] = mpl_aso_select(net, ue, predicted);
        });
        out.push_back({k, metrics::ap_selection_error(t, e), random_selection_error(net.sleep.size(), k),
                       locations.size()});
    }
    return out;
}

struct TrainingMode
{
    enum class Kind { full_rem, scattered };
    Kind kind = Kind::full_rem;
    double fraction = 0.15;  // scattered: share of map pixels with LSF samples
    std::uint64_t seed = 1;  // scattered: location draw
};

inline std::string to_string(const TrainingMode &m)
{
    if (m.kind == TrainingMode::Kind::full_rem)
        return "full_rem";
    std::ostringstream os;
    os << "scattered(" << m.fraction << ")";
    return os.str();
}

struct AsoReport
{
    std::string spec;
    std::string mode;
    std::size_t active = 0;
    std::size_t sleep = 0;
    std::vector<KResult> results;
    double best_val_rmse = 0.0;
};

inline RemSet true_rems(const CfNetwork &net, const std::vector<std::size_t> &which,
                        const propagation::PropagationParams &p)
{
    RemSet out;
    for (std::size_t ap : which)
        out.emplace(ap, propagation::oracle_rem(net.map, net.aps[ap], p));
    return out;
}

// Trains the REM model on active-AP data only (full REMs, or the scattered locations),
// predicts the sleep-AP REMs and scores the resulting selections against the truth.
inline AsoReport evaluate_aso(const CfNetwork &net, const std::vector<std::size_t> &ks,
                              const pipeline::ModelSpec &spec, const pipeline::TrainConfig &cfg,
                              const TrainingMode &mode, const propagation::PropagationParams &p = {},
                              const pipeline::TrainConfig *nnlos_cfg = nullptr)
{
    net.validate();
    std::optional<pipeline::SampleMask> mask;
    if (mode.kind == TrainingMode::Kind::scattered)
        mask = pipeline::random_outdoor_mask(net.map, mode.fraction, mode.seed);

    pipeline::Dataset data;
    const RemSet active = true_rems(net, net.active, p);
    for (std::size_t ap : net.active) {
        pipeline::Sample s{"aso", net.map, net.aps[ap], active.at(ap), std::nullopt};
        if (mask)
            s.mask = mask->to_grid(net.map.width(), net.map.height());
        data.push_back(std::move(s));
    }
    const auto trained = pipeline::train_model(data, spec, cfg, nnlos_cfg);

    RemSet predicted;
    for (std::size_t ap : net.sleep)
        predicted.emplace(ap, pipeline::predict(trained.model, net.map, net.aps[ap]));
    const RemSet truth = true_rems(net, net.sleep, p);
    const auto locations = mask ? mask->pixels : outdoor_locations(net.map);

    AsoReport r;
    r.spec = pipeline::to_string(spec);
    r.mode = to_string(mode);
    r.active = net.active.size();
    r.sleep = net.sleep.size();
    r.results = selection_errors(net, ks, predicted, truth, locations);
    r.best_val_rmse = trained.runs.back().second.best_val_rmse;
    return r;
}

inline nlohmann::json to_json(const AsoReport &r)
{
    nlohmann::json j{{"spec", r.spec},     {"mode", r.mode}, {"active_aps", r.active}, {"sleep_aps", r.sleep},
                     {"best_val_rmse", r.best_val_rmse}, {"results", nlohmann::json::array()}};
    for (const auto &k : r.results)
        j["results"].push_back({{"k", k.k},
                                {"ap_selection_error_pct", k.error_pct},
                                {"random_baseline_pct", k.random_pct},
                                {"locations", k.locations}});
    return j;
}

inline std::string to_csv(const AsoReport &r)
{
    std::ostringstream os;
    os << std::setprecision(9);
    os << "k,ap_selection_error_pct,random_baseline_pct,locations\n";
    for (const auto &k : r.results)
        os << k.k << ',' << k.error_pct << ',' << k.random_pct << ',' << k.locations << '\n';
    return os.str();
}

} // namespace remforge::aso

#endif
