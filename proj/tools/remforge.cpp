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

// remforge command-line tool.
//
//   remforge gen      synthetic city maps, transmitters and oracle REMs
//   remforge los      LoS maps (px / ab / nn) plus a timing CSV
//   remforge train    train a model M(aug, los, net, loss)
//   remforge predict  predict one REM
//   remforge eval     normalized RMSE report and prediction timing
//   remforge aso      AP switch-on evaluation
//   remforge export   PGM -> PNG / CSV
//   remforge replay   re-run a command from its manifest.json
//
// Every command writes <out>/manifest.json listing its artifacts with SHA-256 hashes.
// Timing files are listed separately as measurements; they are never bit-reproducible.

#include "remforge/aso.hpp"
#include "remforge/dataset.hpp"
#include "remforge/metrics.hpp"
#include "remforge/model_io.hpp"
#include "remforge/pipeline.hpp"
#include "remforge/timing.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace remforge;

namespace {

constexpr const char *tool_version = "0.1.0";

// ---------------------------------------------------------------------------------
// logging

enum class Level { quiet = 0, error = 1, warn = 2, info = 3, debug = 4 };

Level log_level()
{
    static const Level lvl = [] {
        const char *e = std::getenv("REMFORGE_LOG");
        const std::string v = e ? e : "warn";
        if (v == "quiet") return Level::quiet;
        if (v == "error") return Level::error;
        if (v == "info") return Level::info;
        if (v == "debug") return Level::debug;
        return Level::warn;
    }();
    return lvl;
}

void log(Level l, const std::string &msg)
{
    static const char *names[] = {"", "error", "warn", "info", "debug"};
    if (l <= log_level())
        std::cerr << "[" << names[static_cast<int>(l)] << "] " << msg << '\n';
}

// ---------------------------------------------------------------------------------
// hashing, time, PNG

std::string sha256_file(const fs::path &p)
{
    const std::string bytes = dataset::read_text(p);
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("io", "SHA-256 failed for " + p.string());
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i)
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

std::string utc_now()
{
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// 8- or 16-bit grayscale PNG; 16-bit samples are written big-endian as PNG requires.
void write_png(const fs::path &path, std::size_t w, std::size_t h, int bit_depth,
               const std::vector<std::uint16_t> &pixels)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    FILE *fp = std::fopen(path.c_str(), "wb");
    if (!fp)
        throw Error("io", "cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw Error("io", "PNG encoding failed for " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t bpp = bit_depth == 16 ? 2 : 1;
    std::vector<png_byte> row(w * bpp);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::uint16_t v = pixels[y * w + x];
            if (bpp == 2) {
                row[2 * x] = static_cast<png_byte>(v >> 8);
                row[2 * x + 1] = static_cast<png_byte>(v & 0xFF);
            } else {
                row[x] = static_cast<png_byte>(v);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

// ---------------------------------------------------------------------------------
// run context and manifest

struct Common
{
    std::uint64_t seed = 1;
    std::string out = "out";
    std::string config;
    unsigned threads = 0;
    std::string format = "json";
};

class Run
{
public:
    Run(std::string command, std::vector<std::string> argv, const Common &c)
        : command_(std::move(command)), argv_(std::move(argv)), common_(c), started_(utc_now())
    {
        fs::create_directories(c.out);
        if (!c.config.empty())
            config_ = load_config(c.config);
    }

    const json &config() const { return config_; }
    fs::path out() const { return common_.out; }
    const Common &common() const { return common_; }

    void artifact(const fs::path &p) { artifacts_.push_back(p); }
    void measurement(const fs::path &p) { measurements_.push_back(p); }

    void write_text_artifact(const fs::path &p, const std::string &s)
    {
        dataset::write_text(p, s);
        artifact(p);
    }

    void finish()
    {
        json m{{"tool", "remforge"},
               {"version", tool_version},
               {"command", command_},
               {"argv", argv_},
               {"seed", common_.seed},
               {"threads", common_.threads},
               {"out", common_.out},
               {"config_path", common_.config},
               {"config", config_},
               {"started_utc", started_},
               {"finished_utc", utc_now()},
               {"artifacts", json::array()},
               {"measurements", json::array()}};
        std::sort(artifacts_.begin(), artifacts_.end());
        for (const auto &p : artifacts_)
            m["artifacts"].push_back({{"path", fs::relative(p, common_.out).generic_string()},
                                      {"sha256", sha256_file(p)},
                                      {"bytes", fs::file_size(p)}});
        for (const auto &p : measurements_)
            m["measurements"].push_back(fs::relative(p, common_.out).generic_string());
        dataset::write_text(out() / "manifest.json", m.dump(2) + "\n");
        log(Level::info, "wrote " + std::to_string(artifacts_.size()) + " artifacts to " + common_.out);
    }

    static json load_config(const std::string &path)
    {
        try {
            return json::parse(dataset::read_text(path));
        } catch (const json::exception &e) {
            throw Error("format", path + ": " + e.what());
        }
    }

private:
    std::string command_;
    std::vector<std::string> argv_;
    Common common_;
    std::string started_;
    json config_ = json::object();
    std::vector<fs::path> artifacts_;
    std::vector<fs::path> measurements_;
};

// Value from a flag when given, else from the config object, else the default.
template <typename T>
T pick(const CLI::Option *flag, const T &flag_value, const json &cfg, const char *key, const T &fallback)
{
    if (flag && flag->count() > 0)
        return flag_value;
    if (cfg.is_object() && cfg.contains(key)) {
        try {
            return cfg.at(key).get<T>();
        } catch (const json::exception &e) {
            throw Error("format", std::string("config key '") + key + "': " + e.what());
        }
    }
    return fallback;
}

void emit(const Common &c, const json &j, const std::string &csv)
{
    if (c.format == "csv")
        std::cout << csv;
    else
        std::cout << j.dump(2) << '\n';
}

propagation::PropagationParams propagation_from(const json &cfg)
{
    propagation::PropagationParams p;
    if (!cfg.is_object())
        return p;
    p.reference_gain_db = cfg.value("reference_gain_db", p.reference_gain_db);
    p.pathloss_exponent = cfg.value("pathloss_exponent", p.pathloss_exponent);
    p.blockage_penalty_db = cfg.value("blockage_penalty_db", p.blockage_penalty_db);
    p.rx_height = cfg.value("rx_height", p.rx_height);
    p.samples_per_meter = cfg.value("samples_per_meter", p.samples_per_meter);
    p.validate();
    return p;
}

json propagation_json(const propagation::PropagationParams &p)
{
    return {{"reference_gain_db", p.reference_gain_db},
            {"pathloss_exponent", p.pathloss_exponent},
            {"blockage_penalty_db", p.blockage_penalty_db},
            {"rx_height", p.rx_height},
            {"samples_per_meter", p.samples_per_meter}};
}

pipeline::TrainConfig train_config_from(const json &j, pipeline::TrainConfig c)
{
    if (!j.is_object())
        return c;
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.input_mode = j.value("input_mode", c.input_mode);
    c.depth = j.value("depth", c.depth);
    c.base_channels = j.value("base_channels", c.base_channels);
    return c;
}

// A dataset root holds bundle directories; a single bundle directory is accepted too.
struct LoadedBundle
{
    fs::path dir;
    geo::MapBundle bundle;
};

std::vector<LoadedBundle> load_bundles(const fs::path &path)
{
    std::vector<LoadedBundle> out;
    if (fs::exists(path / "meta.json")) {
        out.push_back({path, dataset::load_bundle(path)});
        return out;
    }
    for (const auto &id : dataset::list_bundles(path))
        out.push_back({path / id, dataset::load_bundle(path / id)});
    require(!out.empty(), "no map bundles under " + path.string(), "empty_dataset");
    return out;
}

pipeline::Dataset dataset_from(const std::vector<LoadedBundle> &bundles)
{
    pipeline::Dataset data;
    for (const auto &b : bundles)
        for (std::size_t i = 0; i < b.bundle.transmitters.size(); ++i) {
            const fs::path rp = b.dir / ("rem_" + std::to_string(i) + ".pgm");
            require(fs::exists(rp), "missing " + rp.string(), "io");
            data.push_back({b.bundle.map_id, b.bundle.map, b.bundle.transmitters[i], dataset::load_rem(rp), std::nullopt});
        }
    return data;
}

std::string trace_csv(const pipeline::TrainResult &r)
{
    std::ostringstream os;
    os << std::setprecision(17);
    os << "epoch,train_loss,val_rmse\n";
    for (const auto &e : r.trace)
        os << e.epoch << ',' << e.train_loss << ',' << e.val_rmse << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------------
// commands

struct GenArgs
{
    std::size_t count = 4, size = 64, tx = 4;
    double density_min = 0.15, density_max = 0.40;
    CLI::Option *o_count = nullptr, *o_size = nullptr, *o_tx = nullptr, *o_dmin = nullptr, *o_dmax = nullptr;
};

void cmd_gen(Run &run, const GenArgs &a, const CLI::Option *o_seed)
{
    const json &cfg = run.config();
    const auto seed = pick<std::uint64_t>(o_seed, run.common().seed, cfg, "seed", 1);
    const auto count = pick(a.o_count, a.count, cfg, "count", std::size_t{4});
    const auto size = pick(a.o_size, a.size, cfg, "size", std::size_t{64});
    const auto tx = pick(a.o_tx, a.tx, cfg, "tx", std::size_t{4});
    const auto dmin = pick(a.o_dmin, a.density_min, cfg, "density_min", 0.15);
    const auto dmax = pick(a.o_dmax, a.density_max, cfg, "density_max", 0.40);
    require(count >= 1, "count must be at least 1");
    require(dmin > 0.0 && dmax >= dmin && dmax < 0.6, "density range must satisfy 0 < min <= max < 0.6");
    const auto prop = propagation_from(cfg.value("propagation", json::object()));

    const fs::path root = run.out() / "dataset";
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dens(dmin, dmax);
    json index{{"seed", seed}, {"count", count}, {"size", size}, {"tx", tx}, {"propagation", propagation_json(prop)},
               {"maps", json::array()}};
    for (std::size_t i = 0; i < count; ++i) {
        const double d = dens(rng);
        char id[32];
        std::snprintf(id, sizeof id, "map_%03zu", i);
        const auto b = geo::generate_bundle(seed * 1000003ULL + i, size, d, tx, id);
        dataset::save_bundle(root, b);
        run.artifact(root / id / "heights.pgm");
        run.artifact(root / id / "meta.json");
        std::vector<propagation::RadioMap> rems(b.transmitters.size());
        parallel_for(rems.size(), [&](std::size_t k) { rems[k] = propagation::oracle_rem(b.map, b.transmitters[k], prop, 1); },
                     run.common().threads);
        for (std::size_t k = 0; k < rems.size(); ++k) {
            const auto p = dataset::rem_path(root, id, k);
            dataset::save_rem(p, rems[k]);
            run.artifact(p);
        }
        index["maps"].push_back({{"map_id", id}, {"density", geo::building_density(b.map)}});
        log(Level::info, std::string("generated ") + id);
    }
    run.write_text_artifact(root / "dataset.json", index.dump(2) + "\n");
    emit(run.common(), index, "");
}

struct LosArgs
{
    std::string dataset, weights;
    std::vector<std::string> methods{"px", "ab"};
    long tx = -1; // -1 = all transmitters
    std::size_t runs = 5;
    CLI::Option *o_dataset = nullptr, *o_methods = nullptr, *o_tx = nullptr, *o_runs = nullptr, *o_weights = nullptr;
};

void cmd_los(Run &run, const LosArgs &a)
{
    const json &cfg = run.config();
    const auto ds = pick(a.o_dataset, a.dataset, cfg, "dataset", std::string{});
    require(!ds.empty(), "--dataset is required");
    const auto methods = pick(a.o_methods, a.methods, cfg, "methods", a.methods);
    const auto txsel = pick(a.o_tx, a.tx, cfg, "tx", -1L);
    const auto runs = pick(a.o_runs, a.runs, cfg, "runs", std::size_t{5});
    const auto weights = pick(a.o_weights, a.weights, cfg, "weights", std::string{});

    std::optional<nn::UNetParams> f_los;
    std::vector<pipeline::LosKind> kinds;
    for (const auto &m : methods) {
        const auto k = pipeline::parse_los(m);
        require(k != pipeline::LosKind::noLoS, "noLoS has no LoS map");
        if (k == pipeline::LosKind::NNLoS_f && !f_los) {
            require(!weights.empty(), "method nn needs --weights (a model with an f_los net)");
            auto lm = model_io::load_model(weights);
            require(lm.model.f_los.has_value(), weights + " holds no LoS predictor");
            f_los = std::move(lm.model.f_los);
        }
        kinds.push_back(k);
    }
    const auto bundles = load_bundles(ds);
    std::vector<metrics::StageTiming> timing;
    for (auto k : kinds)
        timing.push_back({pipeline::to_string(k), {}});
    std::size_t n_maps = 0;
    for (const auto &lb : bundles) {
        const auto &b = lb.bundle;
        for (std::size_t i = 0; i < b.transmitters.size(); ++i) {
            if (txsel >= 0 && static_cast<std::size_t>(txsel) != i)
                continue;
            ++n_maps;
            for (std::size_t m = 0; m < kinds.size(); ++m) {
                const auto lf = pipeline::compute_los(kinds[m], b.map, b.transmitters[i], f_los ? &*f_los : nullptr,
                                                      run.common().threads);
                const fs::path p = run.out() / b.map_id / ("los_" + methods[m] + "_" + std::to_string(i) + ".pgm");
                fs::create_directories(p.parent_path());
                pnm::write_pgm8(p, los::to_gray(*lf));
                run.artifact(p);
                if (runs > 0) {
                    auto t = timing::time_los(kinds[m], b.map, b.transmitters[i], f_los ? &*f_los : nullptr, runs);
                    timing[m].samples_ms.insert(timing[m].samples_ms.end(), t.samples_ms.begin(), t.samples_ms.end());
                }
            }
        }
    }
    require(n_maps > 0, "no transmitter matched --tx");
    std::ostringstream csv;
    csv << std::setprecision(9) << "method,mean_ms,median_ms,runs,maps\n";
    json j{{"maps", n_maps}, {"timing", json::array()}};
    for (std::size_t m = 0; m < kinds.size(); ++m) {
        csv << methods[m] << ',' << timing[m].mean() << ',' << timing[m].median() << ',' << timing[m].samples_ms.size()
            << ',' << n_maps << '\n';
        j["timing"].push_back({{"method", methods[m]}, {"mean_ms", timing[m].mean()}, {"median_ms", timing[m].median()}});
    }
    dataset::write_text(run.out() / "los_timing.csv", csv.str());
    run.measurement(run.out() / "los_timing.csv");
    emit(run.common(), j, csv.str());
}

struct TrainArgs
{
    std::string dataset, spec = "M(noDAug, PxLoS_f, Unet, MSE)";
    double lr = 1e-4;
    std::size_t epochs = 30, batch = 4, depth = 3, base = 16;
    int mode = 3;
    double mask_fraction = 0.0;
    CLI::Option *o_dataset = nullptr, *o_spec = nullptr, *o_lr = nullptr, *o_epochs = nullptr, *o_batch = nullptr,
                *o_depth = nullptr, *o_base = nullptr, *o_mode = nullptr, *o_mask = nullptr;
};

void cmd_train(Run &run, const TrainArgs &a, const CLI::Option *o_seed)
{
    const json &cfg = run.config();
    const auto ds = pick(a.o_dataset, a.dataset, cfg, "dataset", std::string{});
    require(!ds.empty(), "--dataset is required");
    const auto spec = pipeline::parse_spec(pick(a.o_spec, a.spec, cfg, "spec", a.spec));
    pipeline::TrainConfig tc = train_config_from(cfg.value("train", json::object()), {});
    tc.lr = pick(a.o_lr, a.lr, json::object(), "", tc.lr);
    tc.epochs = pick(a.o_epochs, a.epochs, json::object(), "", tc.epochs);
    tc.batch_size = pick(a.o_batch, a.batch, json::object(), "", tc.batch_size);
    tc.depth = pick(a.o_depth, a.depth, json::object(), "", tc.depth);
    tc.base_channels = pick(a.o_base, a.base, json::object(), "", tc.base_channels);
    tc.input_mode = pick(a.o_mode, a.mode, json::object(), "", tc.input_mode);
    tc.seed = pick<std::uint64_t>(o_seed, run.common().seed, cfg, "seed", tc.seed);
    tc.threads = run.common().threads;
    tc.validate();
    std::optional<pipeline::TrainConfig> nc;
    if (cfg.contains("nnlos")) {
        nc = train_config_from(cfg["nnlos"], tc);
        nc->threads = tc.threads;
    }

    auto data = dataset_from(load_bundles(ds));
    const double mask_fraction = pick(a.o_mask, a.mask_fraction, cfg, "mask_fraction", 0.0);
    if (mask_fraction > 0.0)
        for (auto &s : data)
            s.mask = pipeline::random_outdoor_mask(s.map, mask_fraction, tc.seed).to_grid(s.map.width(), s.map.height());

    log(Level::info, "training " + pipeline::to_string(spec) + " on " + std::to_string(data.size()) + " samples");
    auto trained = pipeline::train_model(data, spec, tc, nc ? &*nc : nullptr);
    const nn::UNetParams *var = nullptr;
    for (auto &[label, r] : trained.runs)
        if (r.var_params && label == "unet")
            var = &*r.var_params;
    model_io::save_model(run.out() / "model.remu", trained.model, var);
    run.artifact(run.out() / "model.remu");

    json summary{{"spec", pipeline::to_string(spec)}, {"samples", data.size()}, {"runs", json::array()}};
    for (const auto &[label, r] : trained.runs) {
        const fs::path p = run.out() / ("loss_trace_" + label + ".csv");
        run.write_text_artifact(p, trace_csv(r));
        summary["runs"].push_back({{"net", label},
                                   {"best_val_rmse", r.best_val_rmse},
                                   {"train_examples", r.train_examples},
                                   {"val_examples", r.val_examples}});
    }
    // the REM net's trace under the plain name
    run.write_text_artifact(run.out() / "loss_trace.csv", trace_csv(trained.runs.back().second));
    run.write_text_artifact(run.out() / "train_summary.json", summary.dump(2) + "\n");
    emit(run.common(), summary, trace_csv(trained.runs.back().second));
}

struct PredictArgs
{
    std::string weights, bundle;
    long tx = 0;
    CLI::Option *o_weights = nullptr, *o_bundle = nullptr, *o_tx = nullptr;
};

void cmd_predict(Run &run, const PredictArgs &a)
{
    const json &cfg = run.config();
    const auto weights = pick(a.o_weights, a.weights, cfg, "weights", std::string{});
    const auto bdir = pick(a.o_bundle, a.bundle, cfg, "map", std::string{});
    require(!weights.empty() && !bdir.empty(), "--weights and --map are required");
    const auto txi = pick(a.o_tx, a.tx, cfg, "tx", 0L);
    const auto lm = model_io::load_model(weights);
    const auto b = dataset::load_bundle(bdir);
    require(txi >= 0 && static_cast<std::size_t>(txi) < b.transmitters.size(),
            "transmitter index " + std::to_string(txi) + " out of range", "out_of_range");
    const auto &tx = b.transmitters[static_cast<std::size_t>(txi)];
    pipeline::PredictTiming t;
    const auto rem = pipeline::predict(lm.model, b.map, tx, &t, run.common().threads);
    const fs::path p = run.out() / "rem.pgm";
    dataset::save_rem(p, rem);
    run.artifact(p);
    double mn = rem.data().front(), mx = mn, sum = 0.0;
    for (double v : rem) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        sum += v;
    }
    json stats{{"map_id", b.map_id},
               {"tx", {{"index", txi}, {"x", tx.x}, {"y", tx.y}, {"z_m", tx.z}}},
               {"spec", pipeline::to_string(lm.model.spec)},
               {"min_db", mn},
               {"max_db", mx},
               {"mean_db", sum / static_cast<double>(rem.size())}};
    run.write_text_artifact(run.out() / "rem_stats.json", stats.dump(2) + "\n");
    json tj{{"preprocess_ms", t.preprocess_ms}, {"forward_ms", t.forward_ms}};
    dataset::write_text(run.out() / "predict_timing.json", tj.dump(2) + "\n");
    run.measurement(run.out() / "predict_timing.json");
    emit(run.common(), stats, "");
}

struct EvalArgs
{
    std::string weights, predictions, dataset;
    double locations = 0.0;
    std::size_t runs = 5;
    CLI::Option *o_weights = nullptr, *o_pred = nullptr, *o_dataset = nullptr, *o_loc = nullptr, *o_runs = nullptr;
};

void cmd_eval(Run &run, const EvalArgs &a, const CLI::Option *o_seed)
{
    const json &cfg = run.config();
    const auto weights = pick(a.o_weights, a.weights, cfg, "weights", std::string{});
    const auto preds = pick(a.o_pred, a.predictions, cfg, "predictions", std::string{});
    const auto ds = pick(a.o_dataset, a.dataset, cfg, "dataset", std::string{});
    const auto loc_fraction = pick(a.o_loc, a.locations, cfg, "locations", 0.0);
    const auto runs = pick(a.o_runs, a.runs, cfg, "runs", std::size_t{5});
    const auto seed = pick<std::uint64_t>(o_seed, run.common().seed, cfg, "seed", 1);
    require(!ds.empty(), "--dataset is required");
    require(weights.empty() != preds.empty(), "give exactly one of --weights and --predictions");

    std::optional<model_io::LoadedModel> lm;
    if (!weights.empty())
        lm = model_io::load_model(weights);
    const auto bundles = load_bundles(ds);
    metrics::EvalAccumulator acc;
    for (const auto &lb : bundles) {
        const auto &b = lb.bundle;
        const auto b0 = geo::binary_mask(b.map);
        std::optional<metrics::Mask> loc;
        if (loc_fraction > 0.0)
            loc = pipeline::random_outdoor_mask(b.map, loc_fraction, seed).to_grid(b.map.width(), b.map.height());
        for (std::size_t i = 0; i < b.transmitters.size(); ++i) {
            const auto truth = propagation::normalize(dataset::load_rem(lb.dir / ("rem_" + std::to_string(i) + ".pgm")));
            Grid<double> pred;
            if (lm) {
                pred = propagation::normalize(pipeline::predict(lm->model, b.map, b.transmitters[i], nullptr,
                                                                run.common().threads));
            } else {
                const fs::path pp = fs::path(preds) / b.map_id / ("rem_" + std::to_string(i) + ".pgm");
                pred = propagation::normalize(dataset::load_rem(pp));
            }
            acc.add(b.map_id, truth, pred, b0, loc ? &*loc : nullptr);
        }
    }
    auto report = acc.report();
    run.write_text_artifact(run.out() / "eval_report.json", metrics::to_json(report).dump(2) + "\n");
    run.write_text_artifact(run.out() / "eval_report.csv", metrics::to_csv(report));
    if (lm && runs > 0) {
        const auto &b = bundles.front().bundle;
        report.timing = metrics::timing_report({timing::time_prediction(lm->model, b.map, b.transmitters.front(), runs)});
        dataset::write_text(run.out() / "eval_timing.csv", metrics::to_csv(*report.timing));
        run.measurement(run.out() / "eval_timing.csv");
    }
    if (run.common().format == "csv")
        std::cout << metrics::to_csv(report);
    else if (run.common().format == "table")
        std::cout << metrics::to_table(report);
    else
        std::cout << metrics::to_json(report).dump(2) << '\n';
}

void cmd_aso(Run &run, const CLI::Option *o_seed)
{
    const json &sc = run.config();
    require(!sc.empty(), "aso needs a scenario file via --config");
    const auto seed = pick<std::uint64_t>(o_seed, run.common().seed, sc, "seed", 1);
    const auto prop = propagation_from(sc.value("propagation", json::object()));
    geo::MapBundle b;
    const std::size_t n_aps = sc.value("aps", std::size_t{20});
    if (sc.contains("bundle")) {
        b = dataset::load_bundle(sc["bundle"].get<std::string>());
        require(b.transmitters.size() == n_aps || !sc.contains("aps"), "bundle AP count differs from 'aps'");
    } else {
        const json m = sc.value("map", json::object());
        b = geo::generate_bundle(m.value("seed", seed), m.value("size", std::size_t{64}), m.value("density", 0.3), n_aps,
                                 "aso");
    }
    auto net = aso::make_network(b.map, b.transmitters, sc.value("sleep", std::size_t{4}), sc.value("split_seed", seed));
    aso::TrainingMode mode;
    const std::string mname = sc.value("mode", std::string{"full_rem"});
    require(mname == "full_rem" || mname == "scattered", "mode must be full_rem or scattered");
    if (mname == "scattered") {
        mode.kind = aso::TrainingMode::Kind::scattered;
        mode.fraction = sc.value("fraction", mode.fraction);
        mode.seed = sc.value("mask_seed", seed);
    }
    const auto spec = pipeline::parse_spec(sc.value("spec", std::string{"M(DAug, PxLoS_f, Unet, MSE)"}));
    pipeline::TrainConfig tc = train_config_from(sc.value("train", json::object()), {});
    tc.seed = sc.value("train", json::object()).value("seed", seed);
    tc.threads = run.common().threads;
    std::optional<pipeline::TrainConfig> nc;
    if (sc.contains("nnlos"))
        nc = train_config_from(sc["nnlos"], tc);
    const auto ks = sc.value("k", std::vector<std::size_t>{1, 2, 3});
    const auto report = aso::evaluate_aso(net, ks, spec, tc, mode, prop, nc ? &*nc : nullptr);
    json j = aso::to_json(report);
    j["sleep_ap_indices"] = net.sleep;
    run.write_text_artifact(run.out() / "aso.json", j.dump(2) + "\n");
    run.write_text_artifact(run.out() / "aso.csv", aso::to_csv(report));
    emit(run.common(), j, aso::to_csv(report));
}

struct ExportArgs
{
    std::string artifact;
    bool png = false, csv = false;
};

void cmd_export(Run &run, const ExportArgs &a)
{
    require(a.png || a.csv, "choose --png and/or --csv");
    const std::string bytes = pnm::detail::read_file(a.artifact);
    const auto h = pnm::detail::parse_header(bytes, a.artifact);
    std::vector<std::uint16_t> px(h.width * h.height);
    int depth = 8;
    if (h.maxval <= 255) {
        const auto g = pnm::decode_pgm8(bytes, a.artifact);
        std::copy(g.begin(), g.end(), px.begin());
    } else {
        const auto g = pnm::decode_pgm16(bytes, a.artifact);
        std::copy(g.begin(), g.end(), px.begin());
        depth = 16;
    }
    const std::string stem = fs::path(a.artifact).stem().string();
    if (a.png) {
        const fs::path p = run.out() / (stem + ".png");
        write_png(p, h.width, h.height, depth, px);
        run.artifact(p);
    }
    if (a.csv) {
        std::ostringstream os;
        for (std::size_t y = 0; y < h.height; ++y)
            for (std::size_t x = 0; x < h.width; ++x)
                os << px[y * h.width + x] << (x + 1 == h.width ? '\n' : ',');
        run.write_text_artifact(run.out() / (stem + ".csv"), os.str());
    }
    emit(run.common(), {{"width", h.width}, {"height", h.height}, {"maxval", h.maxval}}, "");
}

int run_cli(const std::vector<std::string> &args);

// Re-executes the recorded command line with a new output directory.
int cmd_replay(const std::string &manifest_path, const std::string &out)
{
    const json m = Run::load_config(manifest_path);
    auto argv = m.at("argv").get<std::vector<std::string>>();
    require(!argv.empty(), "manifest has an empty argv", "format");
    const std::string cfg_path = m.value("config_path", std::string{});
    if (!cfg_path.empty()) {
        const json now = Run::load_config(cfg_path);
        require(now == m.at("config"), "config " + cfg_path + " changed since the recorded run", "config_changed");
    }
    std::vector<std::string> next;
    bool replaced = false;
    for (std::size_t i = 0; i < argv.size(); ++i) {
        if ((argv[i] == "--out" || argv[i] == "-o") && i + 1 < argv.size()) {
            next.push_back(argv[i]);
            next.push_back(out);
            ++i;
            replaced = true;
        } else if (argv[i].rfind("--out=", 0) == 0) {
            next.push_back("--out=" + out);
            replaced = true;
        } else {
            next.push_back(argv[i]);
        }
    }
    if (!replaced) {
        next.push_back("--out");
        next.push_back(out);
    }
    return run_cli(next);
}

void add_common(CLI::App *sub, Common &c, CLI::Option *&o_seed)
{
    o_seed = sub->add_option("--seed", c.seed, "Random seed");
    sub->add_option("--out,-o", c.out, "Output directory")->capture_default_str();
    sub->add_option("--config", c.config, "JSON config file; flags override its keys")->check(CLI::ExistingFile);
    sub->add_option("--threads", c.threads, "Thread cap (0 = all cores)");
    sub->add_option("--format", c.format, "Result format on stdout")
        ->check(CLI::IsMember({"json", "csv", "table"}))
        ->capture_default_str();
}

int run_cli(const std::vector<std::string> &args)
{
    CLI::App app{"remforge: radio environment map prediction toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version);

    Common c;
    CLI::Option *o_seed = nullptr;

    auto *gen = app.add_subcommand("gen", "Generate synthetic maps, transmitters and oracle REMs");
    GenArgs ga;
    ga.o_count = gen->add_option("--count", ga.count, "Number of maps");
    ga.o_size = gen->add_option("--size", ga.size, "Map side in pixels");
    ga.o_tx = gen->add_option("--tx", ga.tx, "Transmitters per map");
    ga.o_dmin = gen->add_option("--density-min", ga.density_min, "Lowest building density");
    ga.o_dmax = gen->add_option("--density-max", ga.density_max, "Highest building density");

    auto *los = app.add_subcommand("los", "Compute LoS maps and their timing");
    LosArgs la;
    la.o_dataset = los->add_option("--dataset", la.dataset, "Dataset root or bundle directory");
    la.o_methods = los->add_option("--method", la.methods, "LoS methods: px, ab, nn")->delimiter(',');
    la.o_tx = los->add_option("--tx", la.tx, "Transmitter index (default: all)");
    la.o_runs = los->add_option("--runs", la.runs, "Timed runs per LoS map (0 disables timing)");
    la.o_weights = los->add_option("--weights", la.weights, "Model file with an NNLoS predictor");

    auto *train = app.add_subcommand("train", "Train a REM model");
    TrainArgs ta;
    ta.o_dataset = train->add_option("--dataset", ta.dataset, "Dataset root");
    ta.o_spec = train->add_option("--spec", ta.spec, "Model spec, e.g. \"M(DAug, PxLoS_f, Unet, MSE)\"");
    ta.o_lr = train->add_option("--lr", ta.lr, "Learning rate");
    ta.o_epochs = train->add_option("--epochs", ta.epochs, "Epochs");
    ta.o_batch = train->add_option("--batch", ta.batch, "Batch size");
    ta.o_depth = train->add_option("--depth", ta.depth, "U-net depth");
    ta.o_base = train->add_option("--base", ta.base, "U-net base width");
    ta.o_mode = train->add_option("--input-mode", ta.mode, "Input channels K (2, 3 or 5)");
    ta.o_mask = train->add_option("--mask-fraction", ta.mask_fraction, "Train on scattered outdoor samples only");

    auto *pred = app.add_subcommand("predict", "Predict one REM");
    PredictArgs pa;
    pa.o_weights = pred->add_option("--weights", pa.weights, "Model file");
    pa.o_bundle = pred->add_option("--map", pa.bundle, "Map bundle directory");
    pa.o_tx = pred->add_option("--tx", pa.tx, "Transmitter index");

    auto *ev = app.add_subcommand("eval", "Evaluate predictions against a dataset");
    EvalArgs ea;
    ea.o_weights = ev->add_option("--weights", ea.weights, "Model file");
    ea.o_pred = ev->add_option("--predictions", ea.predictions, "Directory of predicted REM PGMs (dataset layout)");
    ea.o_dataset = ev->add_option("--dataset", ea.dataset, "Dataset root");
    ea.o_loc = ev->add_option("--locations", ea.locations, "Also score at random outdoor locations (fraction)");
    ea.o_runs = ev->add_option("--runs", ea.runs, "Timed prediction runs (0 disables timing)");

    auto *as = app.add_subcommand("aso", "AP switch-on evaluation from a scenario file (--config)");

    auto *ex = app.add_subcommand("export", "Export a PGM raster");
    ExportArgs xa;
    ex->add_option("artifact", xa.artifact, "PGM file")->required()->check(CLI::ExistingFile);
    ex->add_flag("--png", xa.png, "Write a PNG");
    ex->add_flag("--csv", xa.csv, "Write the raw values as CSV");

    auto *rp = app.add_subcommand("replay", "Re-run a command from its manifest");
    std::string manifest, replay_out;
    rp->add_option("manifest", manifest, "manifest.json")->required()->check(CLI::ExistingFile);
    rp->add_option("--out,-o", replay_out, "Output directory")->required();

    CLI::Option *seeds[7] = {};
    CLI::App *subs[7] = {gen, los, train, pred, ev, as, ex};
    for (int i = 0; i < 7; ++i)
        add_common(subs[i], c, seeds[i]);

    std::vector<const char *> argv;
    argv.push_back("remforge");
    for (const auto &s : args)
        argv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError &e) {
        if (e.get_exit_code() == 0)
            return app.exit(e);
        std::cerr << json{{"error", {{"code", "usage"}, {"message", e.what()}}}}.dump() << '\n';
        return 2;
    }

    if (rp->parsed())
        return cmd_replay(manifest, replay_out);
    if (c.threads > 0)
        set_threads(c.threads);

    for (int i = 0; i < 7; ++i) {
        if (!subs[i]->parsed())
            continue;
        o_seed = seeds[i];
        Run run(subs[i]->get_name(), args, c);
        switch (i) {
        case 0: cmd_gen(run, ga, o_seed); break;
        case 1: cmd_los(run, la); break;
        case 2: cmd_train(run, ta, o_seed); break;
        case 3: cmd_predict(run, pa); break;
        case 4: cmd_eval(run, ea, o_seed); break;
        case 5: cmd_aso(run, o_seed); break;
        case 6: cmd_export(run, xa); break;
        }
        run.finish();
    }
    return 0;
}

} // namespace

int main(int argc, char **argv)
{
    try {
        return run_cli(std::vector<std::string>(argv + 1, argv + argc));
    } catch (const Error &e) {
        std::cerr << json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump() << '\n';
        return 1;
    } catch (const std::exception &e) {
        std::cerr << json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump() << '\n';
        return 1;
    }
}
