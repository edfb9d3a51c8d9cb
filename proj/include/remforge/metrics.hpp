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

// Evaluation metrics on normalized REMs (values in [0, 1] over the 36 dB span) and a
// small timing harness.

#ifndef REMFORGE_METRICS_HPP
#define REMFORGE_METRICS_HPP

#include "core.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace remforge::metrics {

using NormMap = Grid<double>;
using Mask = Grid<std::uint8_t>;

namespace detail {

inline void check_pair(const NormMap &y, const NormMap &yhat)
{
    require(y.same_shape(yhat), "prediction shape differs from ground truth", "shape_mismatch");
}

inline void check_lists(std::size_t a, std::size_t b)
{
    require(a == b, "ground truth and prediction lists differ in length", "shape_mismatch");
    require(a > 0, "no maps to evaluate", "empty_dataset");
}

} // namespace detail

// Squared-error sum and pixel count; the building block of every RMSE variant.
struct ErrorSum
{
    double sq = 0.0;
    std::size_t n = 0;

    ErrorSum &operator+=(const ErrorSum &o)
    {
        sq += o.sq;
        n += o.n;
        return *this;
    }
    double rmse() const { return n ? std::sqrt(sq / static_cast<double>(n)) : 0.0; }
};

// Sums over the pixels where mask != 0 (all pixels when mask is null). When zero_on is
// given, its nonzero pixels are set to 0 in both maps first.
inline ErrorSum error_sum(const NormMap &y, const NormMap &yhat, const Mask *mask = nullptr,
                          const Mask *zero_on = nullptr)
{
    detail::check_pair(y, yhat);
    if (mask)
        require(mask->width() == y.width() && mask->height() == y.height(), "mask shape differs from the map",
                "shape_mismatch");
    if (zero_on)
        require(zero_on->width() == y.width() && zero_on->height() == y.height(),
                "building mask shape differs from the map", "shape_mismatch");
    ErrorSum s;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (mask && !mask->data()[i])
            continue;
        double a = y.data()[i], b = yhat.data()[i];
        if (zero_on && zero_on->data()[i])
            a = b = 0.0;
        s.sq += (a - b) * (a - b);
        ++s.n;
    }
    return s;
}

// sqrt(sum over maps and pixels of squared error / (L * N)).
inline double rmse_full(const std::vector<NormMap> &y, const std::vector<NormMap> &yhat)
{
    detail::check_lists(y.size(), yhat.size());
    ErrorSum s;
    for (std::size_t l = 0; l < y.size(); ++l) {
        require(y[l].same_shape(y.front()), "all maps of a test set must share one shape", "shape_mismatch");
        s += error_sum(y[l], yhat[l]);
    }
    return s.rmse();
}

inline double rmse_full(const NormMap &y, const NormMap &yhat)
{
    return rmse_full(std::vector<NormMap>{y}, std::vector<NormMap>{yhat});
}

// Challenge variant: building pixels (B0 != 0) are zeroed in both maps before the full RMSE.
inline double rmse_challenge(const std::vector<NormMap> &y, const std::vector<NormMap> &yhat,
                             const std::vector<Mask> &b0)
{
    detail::check_lists(y.size(), yhat.size());
    require(b0.size() == y.size(), "one building mask per map is required", "shape_mismatch");
    ErrorSum s;
    for (std::size_t l = 0; l < y.size(); ++l)
        s += error_sum(y[l], yhat[l], nullptr, &b0[l]);
    return s.rmse();
}

inline double rmse_challenge(const NormMap &y, const NormMap &yhat, const Mask &b0)
{
    return rmse_challenge(std::vector<NormMap>{y}, std::vector<NormMap>{yhat}, std::vector<Mask>{b0});
}

// RMSE restricted to the considered outdoor locations (mask != 0), denominator L * N_u.
inline double rmse_at_locations(const std::vector<NormMap> &y, const std::vector<NormMap> &yhat,
                                const std::vector<Mask> &masks)
{
    detail::check_lists(y.size(), yhat.size());
    require(masks.size() == y.size() || masks.size() == 1, "need one location mask, or one per map",
            "shape_mismatch");
    ErrorSum s;
    for (std::size_t l = 0; l < y.size(); ++l)
        s += error_sum(y[l], yhat[l], &masks[masks.size() == 1 ? 0 : l]);
    require(s.n > 0, "location mask selects no pixel", "invalid_argument");
    return s.rmse();
}

inline double rmse_at_locations(const NormMap &y, const NormMap &yhat, const Mask &mask)
{
    return rmse_at_locations(std::vector<NormMap>{y}, std::vector<NormMap>{yhat}, std::vector<Mask>{mask});
}

// Percentage of locations whose estimated AP set differs from the true one. Sets are
// compared exactly; order inside a set does not matter.
inline double ap_selection_error(const std::vector<std::vector<std::size_t>> &true_sets,
                                 const std::vector<std::vector<std::size_t>> &est_sets)
{
    require(true_sets.size() == est_sets.size(), "true and estimated selections differ in length",
            "shape_mismatch");
    require(!true_sets.empty(), "no locations to evaluate", "empty_dataset");
    std::size_t wrong = 0;
    for (std::size_t n = 0; n < true_sets.size(); ++n) {
        const std::set<std::size_t> a(true_sets[n].begin(), true_sets[n].end());
        const std::set<std::size_t> b(est_sets[n].begin(), est_sets[n].end());
        wrong += a != b;
    }
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(true_sets.size());
}

// ---------------------------------------------------------------------------------
// timing

struct StageTiming
{
    std::string stage;
    std::vector<double> samples_ms; // one per measured run, warmup excluded

    double mean() const
    {
        if (samples_ms.empty())
            return 0.0;
        double s = 0.0;
        for (double v : samples_ms)
            s += v;
        return s / static_cast<double>(samples_ms.size());
    }

    double median() const
    {
        if (samples_ms.empty())
            return 0.0;
        std::vector<double> v = samples_ms;
        std::sort(v.begin(), v.end());
        const std::size_t m = v.size() / 2;
        return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    }
};

// Runs f() `warmup` times unmeasured, then `runs` times on a monotonic clock.
template <typename F>
StageTiming time_stage(std::string stage, F &&f, std::size_t runs = 5, std::size_t warmup = 1)
{
    using clock = std::chrono::steady_clock;
    StageTiming t{std::move(stage), {}};
    for (std::size_t i = 0; i < warmup; ++i)
        f();
    for (std::size_t i = 0; i < runs; ++i) {
        const auto a = clock::now();
        f();
        const auto b = clock::now();
        t.samples_ms.push_back(std::chrono::duration<double, std::milli>(b - a).count());
    }
    return t;
}

// One column of the per-REM prediction time table: LoS/input preprocessing plus the
// network forward pass.
struct MethodTiming
{
    std::string method;
    StageTiming preprocess;
    StageTiming forward;

    double total_mean() const { return preprocess.mean() + forward.mean(); }
    double total_median() const { return preprocess.median() + forward.median(); }
};

struct TimingReport
{
    std::vector<MethodTiming> methods;

    const MethodTiming *find(const std::string &m) const
    {
        for (const auto &t : methods)
            if (t.method == m)
                return &t;
        return nullptr;
    }
};

inline TimingReport timing_report(std::vector<MethodTiming> methods) { return {std::move(methods)}; }

inline nlohmann::json to_json(const StageTiming &s)
{
    return {{"stage", s.stage}, {"mean_ms", s.mean()}, {"median_ms", s.median()}, {"runs", s.samples_ms.size()}};
}

inline nlohmann::json to_json(const TimingReport &r)
{
    nlohmann::json out = nlohmann::json::array();
    for (const auto &m : r.methods)
        out.push_back({{"method", m.method},
                       {"preprocess", to_json(m.preprocess)},
                       {"forward", to_json(m.forward)},
                       {"total_mean_ms", m.total_mean()},
                       {"total_median_ms", m.total_median()}});
    return out;
}

// Methods as columns; rows are the preprocessing, forward and total mean times.
inline std::string to_table(const TimingReport &r)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    os << std::left << std::setw(22) << "ms per REM (mean)";
    for (const auto &m : r.methods)
        os << std::right << std::setw(14) << m.method;
    os << '\n';
    auto row = [&](const char *name, auto value) {
        os << std::left << std::setw(22) << name;
        for (const auto &m : r.methods)
            os << std::right << std::setw(14) << value(m);
        os << '\n';
    };
    row("preprocessing", [](const MethodTiming &m) { return m.preprocess.mean(); });
    row("forward pass", [](const MethodTiming &m) { return m.forward.mean(); });
    row("total", [](const MethodTiming &m) { return m.total_mean(); });
    row("total (median of runs)", [](const MethodTiming &m) { return m.total_median(); });
    return os.str();
}

inline std::string to_csv(const TimingReport &r)
{
    std::ostringstream os;
    os << std::setprecision(9);
    os << "method,preprocess_mean_ms,preprocess_median_ms,forward_mean_ms,forward_median_ms,total_mean_ms\n";
    for (const auto &m : r.methods)
        os << m.method << ',' << m.preprocess.mean() << ',' << m.preprocess.median() << ',' << m.forward.mean() << ','
           << m.forward.median() << ',' << m.total_mean() << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------------
// evaluation report

struct MapScore
{
    std::string map_id;
    std::size_t samples = 0;
    double rmse = 0.0;
    double rmse_challenge = 0.0;
};

struct EvalReport
{
    double rmse = 0.0;
    double rmse_challenge = 0.0;
    std::optional<double> rmse_locations; // when a location mask was supplied
    std::size_t samples = 0;
    std::vector<MapScore> per_map;
    std::optional<TimingReport> timing;
};

// Accumulates (truth, prediction) pairs grouped by map id, in insertion order.
class EvalAccumulator
{
public:
    void add(const std::string &map_id, const NormMap &y, const NormMap &yhat, const Mask &b0,
             const Mask *locations = nullptr)
    {
        const ErrorSum full = error_sum(y, yhat);
        const ErrorSum chal = error_sum(y, yhat, nullptr, &b0);
        auto it = std::find_if(maps_.begin(), maps_.end(), [&](const auto &m) { return m.id == map_id; });
        if (it == maps_.end()) {
            maps_.push_back({map_id, 0, {}, {}});
            it = maps_.end() - 1;
        }
        ++it->samples;
        it->full += full;
        it->chal += chal;
        full_ += full;
        chal_ += chal;
        if (locations)
            loc_ += error_sum(y, yhat, locations);
        ++samples_;
    }

    EvalReport report() const
    {
        require(samples_ > 0, "no samples evaluated", "empty_dataset");
        EvalReport r;
        r.rmse = full_.rmse();
        r.rmse_challenge = chal_.rmse();
        if (loc_.n)
            r.rmse_locations = loc_.rmse();
        r.samples = samples_;
        for (const auto &m : maps_)
            r.per_map.push_back({m.id, m.samples, m.full.rmse(), m.chal.rmse()});
        return r;
    }

private:
    struct PerMap
    {
        std::string id;
        std::size_t samples;
        ErrorSum full, chal;
    };
    std::vector<PerMap> maps_;
    ErrorSum full_, chal_, loc_;
    std::size_t samples_ = 0;
};

inline nlohmann::json to_json(const EvalReport &r)
{
    nlohmann::json j{{"rmse", r.rmse}, {"rmse_challenge", r.rmse_challenge}, {"samples", r.samples}};
    if (r.rmse_locations)
        j["rmse_locations"] = *r.rmse_locations;
    j["per_map"] = nlohmann::json::array();
    for (const auto &m : r.per_map)
        j["per_map"].push_back(
            {{"map_id", m.map_id}, {"samples", m.samples}, {"rmse", m.rmse}, {"rmse_challenge", m.rmse_challenge}});
    if (r.timing)
        j["timing"] = to_json(*r.timing);
    return j;
}

inline std::string to_csv(const EvalReport &r)
{
    std::ostringstream os;
    os << std::setprecision(9);
    os << "map_id,samples,rmse,rmse_challenge\n";
    for (const auto &m : r.per_map)
        os << m.map_id << ',' << m.samples << ',' << m.rmse << ',' << m.rmse_challenge << '\n';
    os << "ALL," << r.samples << ',' << r.rmse << ',' << r.rmse_challenge << '\n';
    return os.str();
}

inline std::string to_table(const EvalReport &r)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(5);
    os << "normalized RMSE            " << r.rmse << '\n';
    os << "normalized RMSE, challenge " << r.rmse_challenge << '\n';
    if (r.rmse_locations)
        os << "normalized RMSE, locations " << *r.rmse_locations << '\n';
    os << "samples                    " << r.samples << '\n';
    os << '\n' << std::left << std::setw(16) << "map" << std::right << std::setw(9) << "samples" << std::setw(12)
       << "rmse" << std::setw(12) << "challenge" << '\n';
    for (const auto &m : r.per_map)
        os << std::left << std::setw(16) << m.map_id << std::right << std::setw(9) << m.samples << std::setw(12)
           << m.rmse << std::setw(12) << m.rmse_challenge << '\n';
    if (r.timing)
        os << '\n' << to_table(*r.timing);
    return os.str();
}

} // namespace remforge::metrics

#endif
