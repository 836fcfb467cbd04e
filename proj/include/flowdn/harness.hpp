// Experiment orchestration: dataset materialization, the training loop, the
// weighting x class grid, and report emission (CSV tables, delta-PSNR plots).
#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "flowdn/checkpoint.hpp"
#include "flowdn/csv.hpp"
#include "flowdn/datasets.hpp"
#include "flowdn/metrics.hpp"
#include "flowdn/models.hpp"
#include "flowdn/objectives.hpp"
#include "flowdn/optim.hpp"
#include "flowdn/oracle.hpp"
#include "flowdn/sampler.hpp"
#include "flowdn/serialize.hpp"
#include "flowdn/svg.hpp"
#include "flowdn/tensor.hpp"

namespace flowdn::harness {

using ser::json;

// ---- dataset spec ----------------------------------------------------------

struct DatasetSpec {
    enum class Kind { Fourier, Gaussian, Mixture, File };
    Kind kind = Kind::Gaussian;
    data::FourierManifoldSpec fourier;
    oracle::GaussianDataSpec gaussian{1.0, 2};
    data::Mixture2dSpec mixture;
    std::string path;   // Kind::File
    int n_train = 0;    // 0 = draw fresh samples every batch
    int n_eval = 1000;

    int dim() const {
        switch (kind) {
            case Kind::Fourier: return fourier.grid_n * fourier.grid_n;
            case Kind::Gaussian: return gaussian.dim;
            case Kind::Mixture: return 2;
            case Kind::File: return 0;  // known after loading
        }
        return 0;
    }

    void validate() const {
        if (n_train < 0) throw ConfigError("dataset: n_train must be >= 0");
        if (n_eval < 1) throw ConfigError("dataset: n_eval must be >= 1");
        if (kind == Kind::File && path.empty()) throw ConfigError("dataset: file kind needs a path");
        if (kind == Kind::Mixture && mixture.centers.empty())
            throw ConfigError("dataset: mixture needs centers");
    }
};

inline json to_json(const DatasetSpec& s) {
    json j;
    switch (s.kind) {
        case DatasetSpec::Kind::Fourier:
            j["kind"] = "fourier";
            j["fourier"] = ser::to_json(s.fourier);
            break;
        case DatasetSpec::Kind::Gaussian:
            j["kind"] = "gaussian";
            j["gaussian"] = ser::to_json(s.gaussian);
            break;
        case DatasetSpec::Kind::Mixture:
            j["kind"] = "mixture";
            j["mixture"] = ser::to_json(s.mixture);
            break;
        case DatasetSpec::Kind::File:
            j["kind"] = "file";
            j["path"] = s.path;
            break;
    }
    j["n_train"] = s.n_train;
    j["n_eval"] = s.n_eval;
    return j;
}

inline DatasetSpec dataset_spec_from_json(const json& j) {
    DatasetSpec s;
    const std::string kind = ser::require<std::string>(j, "kind");
    if (kind == "fourier") {
        s.kind = DatasetSpec::Kind::Fourier;
        s.fourier = ser::fourier_spec_from_json(ser::require<json>(j, "fourier"));
    } else if (kind == "gaussian") {
        s.kind = DatasetSpec::Kind::Gaussian;
        s.gaussian = ser::gaussian_spec_from_json(ser::require<json>(j, "gaussian"));
    } else if (kind == "mixture") {
        s.kind = DatasetSpec::Kind::Mixture;
        s.mixture = ser::mixture_spec_from_json(ser::require<json>(j, "mixture"));
    } else if (kind == "file") {
        s.kind = DatasetSpec::Kind::File;
        s.path = ser::require<std::string>(j, "path");
    } else {
        throw ConfigError("dataset: unknown kind '" + kind + "'");
    }
    s.n_train = ser::require<int>(j, "n_train");
    s.n_eval = ser::require<int>(j, "n_eval");
    s.validate();
    return s;
}

// ---- materialized dataset --------------------------------------------------

struct Dataset {
    int dim = 0;
    json header;  // dataset-file header: spec, and mode set when Fourier
    std::optional<data::ModeSet> mode_set;
    TensorValue train;     // empty (0 rows) when streaming
    TensorValue eval_set;  // always materialized
    std::function<TensorValue(int, Rng&)> fresh;  // streaming draw, may be null

    TensorValue draw_batch(int b, Rng& rng) const {
        if (b < 1) throw ConfigError("draw_batch: batch size must be positive");
        if (train.numel() > 0) {
            TensorValue out = TensorValue::zeros({b, dim});
            for (int i = 0; i < b; ++i) {
                const std::uint64_t src = rng.index(train.rows());
                std::copy_n(train.data.data() + src * dim, dim,
                            out.data.data() + static_cast<size_t>(i) * dim);
            }
            return out;
        }
        if (fresh) return fresh(b, rng);
        throw ConfigError("draw_batch: dataset has no samples and no generator");
    }
};

namespace detail {

// RNG stream tags so independent draws never collide.
inline constexpr std::uint64_t kStreamTrainSet = 0x7472;
inline constexpr std::uint64_t kStreamEvalSet = 0x6576;
inline constexpr std::uint64_t kStreamInit = 0x696e;
inline constexpr std::uint64_t kStreamData = 0x6461;
inline constexpr std::uint64_t kStreamNoise = 0x6e6f;
inline constexpr std::uint64_t kStreamTime = 0x7469;
inline constexpr std::uint64_t kStreamGen = 0x6765;

inline TensorValue stack_images(const std::function<TensorValue(Rng&)>& draw_one, int n, int d,
                                Rng& rng) {
    TensorValue out = TensorValue::zeros({n, d});
    for (int i = 0; i < n; ++i) {
        const TensorValue img = draw_one(rng);
        if (img.numel() != d) throw ShapeError("dataset draw produced wrong size");
        std::copy_n(img.data.data(), d, out.data.data() + static_cast<size_t>(i) * d);
    }
    return out;
}

}  // namespace detail

inline Dataset materialize(const DatasetSpec& spec) {
    spec.validate();
    Dataset ds;
    if (spec.kind == DatasetSpec::Kind::File) {
        io::LoadedDataset ld = io::load_dataset(spec.path);
        ds.header = ld.header;
        ds.dim = ld.data.cols();
        if (ld.header.contains("mode_set"))
            ds.mode_set = ser::mode_set_from_json(ld.header.at("mode_set"));
        ds.train = ld.data;
        ds.eval_set = std::move(ld.data);
        return ds;
    }
    ds.dim = spec.dim();
    ds.header["spec"] = to_json(spec);
    std::function<TensorValue(Rng&)> draw_one;
    if (spec.kind == DatasetSpec::Kind::Fourier) {
        const data::ModeSet ms = data::select_modes(spec.fourier);
        ds.mode_set = ms;
        ds.header["mode_set"] = ser::to_json(ms);
        const data::FourierManifoldSpec fspec = spec.fourier;
        draw_one = [fspec, ms](Rng& rng) {
            return data::sample_fourier_image(fspec, ms, rng);
        };
    } else if (spec.kind == DatasetSpec::Kind::Gaussian) {
        const oracle::GaussianDataSpec g = spec.gaussian;
        draw_one = [g](Rng& rng) { return data::sample_gaussian_data(g, 1, rng); };
    } else {
        const data::Mixture2dSpec m = spec.mixture;
        draw_one = [m](Rng& rng) { return data::sample_mixture2d(m, 1, rng); };
    }
    const std::uint64_t dseed =
        spec.kind == DatasetSpec::Kind::Fourier ? spec.fourier.dataset_seed : 1;
    if (spec.n_train > 0) {
        Rng rng(dseed, detail::kStreamTrainSet);
        ds.train = detail::stack_images(draw_one, spec.n_train, ds.dim, rng);
    }
    {
        Rng rng(dseed, detail::kStreamEvalSet);
        ds.eval_set = detail::stack_images(draw_one, spec.n_eval, ds.dim, rng);
    }
    ds.fresh = [draw_one, d = ds.dim](int n, Rng& rng) {
        return detail::stack_images(draw_one, n, d, rng);
    };
    return ds;
}

// ---- run configuration -----------------------------------------------------

struct RunConfig {
    DatasetSpec dataset;
    models::ModelSpec model;
    std::string weighting = "w_vel";
    std::string param_class = "c_vel";
    double lr = 1e-3;
    std::string lr_schedule = "constant";  // or "cosine" (half-period decay to 0)
    int batch_size = 64;
    long iterations = 1000;
    double ema_lambda = 0.999;
    double t_lo = 1e-3;
    double t_hi = 1.0 - 1e-3;
    std::uint64_t seed = 1;
    std::uint64_t init_seed = 1;  // shared across grid cells by construction
    long log_every = 100;
    std::string out_dir;  // empty = keep everything in memory

    void validate() const {
        dataset.validate();
        model.validate();
        obj::parse_weighting(weighting);
        obj::parse_param_class(param_class);
        if (lr <= 0.0) throw ConfigError("run: lr must be positive");
        if (lr_schedule != "constant" && lr_schedule != "cosine")
            throw ConfigError("run: unknown lr_schedule '" + lr_schedule + "'");
        if (batch_size < 1) throw ConfigError("run: batch_size must be positive");
        if (iterations < 0) throw ConfigError("run: iterations must be >= 0");
        if (!(ema_lambda >= 0.0 && ema_lambda < 1.0)) throw ConfigError("run: ema_lambda in [0,1)");
        if (!(0.0 <= t_lo && t_lo < t_hi && t_hi <= 1.0)) throw ConfigError("run: bad time clamp");
        if (log_every < 1) throw ConfigError("run: log_every must be positive");
        const int d = dataset.dim();
        if (d > 0 && model.input_dim != d)
            throw ConfigError("run: model input_dim " + std::to_string(model.input_dim) +
                              " does not match dataset dim " + std::to_string(d));
    }
};

inline json to_json(const RunConfig& c) {
    json j;
    j["dataset"] = to_json(c.dataset);
    j["model"] = ser::to_json(c.model);
    j["weighting"] = c.weighting;
    j["class"] = c.param_class;
    j["lr"] = c.lr;
    j["lr_schedule"] = c.lr_schedule;
    j["batch_size"] = c.batch_size;
    j["iterations"] = c.iterations;
    j["ema_lambda"] = c.ema_lambda;
    j["t_lo"] = c.t_lo;
    j["t_hi"] = c.t_hi;
    j["seed"] = c.seed;
    j["init_seed"] = c.init_seed;
    j["log_every"] = c.log_every;
    return j;
}

inline RunConfig run_config_from_json(json j) {
    // Accept both the nested form and the flat dotted-key config-file form.
    bool flat = false;
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key().find('.') != std::string::npos) flat = true;
    if (flat) j = ser::unflatten(j);
    RunConfig c;
    c.dataset = dataset_spec_from_json(ser::require<json>(j, "dataset"));
    c.model = ser::model_spec_from_json(ser::require<json>(j, "model"));
    c.weighting = ser::require<std::string>(j, "weighting");
    c.param_class = ser::require<std::string>(j, "class");
    c.lr = ser::require<double>(j, "lr");
    c.lr_schedule = ser::require<std::string>(j, "lr_schedule");
    c.batch_size = ser::require<int>(j, "batch_size");
    c.iterations = ser::require<long>(j, "iterations");
    c.ema_lambda = ser::require<double>(j, "ema_lambda");
    c.t_lo = ser::require<double>(j, "t_lo");
    c.t_hi = ser::require<double>(j, "t_hi");
    c.seed = ser::require<std::uint64_t>(j, "seed");
    c.init_seed = ser::require<std::uint64_t>(j, "init_seed");
    c.log_every = ser::require<long>(j, "log_every");
    c.validate();
    return c;
}

// Canonical on-disk form: flat dotted keys, every field explicit.
inline std::string config_file_text(const RunConfig& c) {
    return ser::canonical_dump(ser::flatten(to_json(c))) + "\n";
}

inline std::string resolve_out_dir(const std::string& dir) {
    if (dir.empty()) return dir;
    std::filesystem::path p(dir);
    if (p.is_absolute()) return dir;
    if (const char* root = std::getenv("FLOWDN_OUT_ROOT")) return (std::filesystem::path(root) / p).string();
    return dir;
}

// ---- training --------------------------------------------------------------

struct TrainLogEntry {
    long step = 0;
    double loss = 0.0;
};

struct TrainResult {
    models::ModelSpec model;
    ParamStore store;
    std::vector<TrainLogEntry> log;
    Dataset dataset;
    json summary;
};

// Chunked evaluation network: bounds tape memory for large eval batches.
inline sampler::NetworkFn chunked_network(const models::ModelSpec& spec, const ParamStore& store,
                                          bool use_ema = true, int chunk = 64) {
    const ParamStore* sp = &store;
    return [spec, sp, use_ema, chunk](const TensorValue& x, double t) {
        const int n = x.rows(), d = x.cols();
        if (n <= chunk)
            return models::eval_forward(spec, *sp, use_ema, x, std::vector<double>(n, t));
        TensorValue out = TensorValue::zeros({n, d});
        for (int start = 0; start < n; start += chunk) {
            const int b = std::min(chunk, n - start);
            TensorValue part = TensorValue::zeros({b, d});
            std::copy_n(x.data.data() + static_cast<size_t>(start) * d, static_cast<size_t>(b) * d,
                        part.data.data());
            const TensorValue y =
                models::eval_forward(spec, *sp, use_ema, part, std::vector<double>(b, t));
            std::copy_n(y.data.data(), static_cast<size_t>(b) * d,
                        out.data.data() + static_cast<size_t>(start) * d);
        }
        return out;
    };
}

inline TrainResult train(const RunConfig& config) {
    config.validate();
    const auto t_begin = std::chrono::steady_clock::now();
    TrainResult res;
    res.model = config.model;
    res.dataset = materialize(config.dataset);
    if (res.dataset.dim != config.model.input_dim)
        throw ConfigError("train: dataset dim " + std::to_string(res.dataset.dim) +
                          " does not match model input_dim");
    const obj::WeightingScheme w = obj::parse_weighting(config.weighting);
    const obj::ParamClass cls = obj::parse_param_class(config.param_class);

    Rng init_rng(config.init_seed, detail::kStreamInit);
    models::init_params(config.model, res.store, init_rng);

    Rng data_rng(config.seed, detail::kStreamData);
    Rng noise_rng(config.seed, detail::kStreamNoise);
    Rng time_rng(config.seed, detail::kStreamTime);
    const bool cosine = config.lr_schedule == "cosine";
    const int d = res.dataset.dim;

    for (long step = 1; step <= config.iterations; ++step) {
        TensorValue x1 = res.dataset.draw_batch(config.batch_size, data_rng);
        TensorValue x0 = TensorValue::zeros({config.batch_size, d});
        for (double& v : x0.data) v = noise_rng.normal();
        std::vector<double> t(config.batch_size);
        for (double& ti : t) ti = obj::sample_time(time_rng, config.t_lo, config.t_hi);
        const obj::InterpolantBatch batch = obj::make_batch(std::move(x0), std::move(x1), std::move(t));

        nn::Tape tape;
        std::vector<nn::Var> pvars;
        pvars.reserve(res.store.size());
        for (size_t i = 0; i < res.store.size(); ++i)
            pvars.push_back(tape.input(res.store.entry(static_cast<int>(i)).value));
        const nn::Var n_out =
            models::model_forward(tape, config.model, pvars, tape.constant(batch.xt), batch.t);
        const nn::Var loss = obj::unified_loss_graph(tape, n_out, batch, cls, w, step);
        tape.backward(loss);
        std::vector<TensorValue> grads;
        grads.reserve(pvars.size());
        for (const nn::Var v : pvars) grads.push_back(tape.grad(v));
        AdamConfig adam{config.lr};
        if (cosine)
            adam.lr *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step - 1) /
                                             static_cast<double>(config.iterations)));
        res.store.adam_step(grads, adam);
        res.store.ema_update(config.ema_lambda);

        const double lv = tape.val(loss).data[0];
        if (step == 1 || step == config.iterations || step % config.log_every == 0)
            res.log.push_back({step, lv});
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    res.summary["iterations"] = config.iterations;
    res.summary["final_loss"] = res.log.empty() ? 0.0 : res.log.back().loss;
    res.summary["wall_seconds"] = wall;
    res.summary["num_params"] = res.store.num_scalars();

    const std::string out = resolve_out_dir(config.out_dir);
    if (!out.empty()) {
        std::filesystem::create_directories(out);
        io::write_text_file(out + "/config.json", config_file_text(config));
        csv::Table log_table;
        log_table.columns = {"step", "loss"};
        for (const TrainLogEntry& e : res.log)
            log_table.rows.push_back({std::to_string(e.step), csv::format_double(e.loss)});
        io::write_text_file(out + "/train_log.csv", csv::serialize(log_table));
        json manifest;
        manifest["model"] = ser::to_json(config.model);
        manifest["config"] = ser::flatten(to_json(config));
        manifest["summary"] = res.summary;
        io::save_checkpoint(out + "/checkpoint.bin", res.store, manifest);
    }
    return res;
}

// ---- grid ------------------------------------------------------------------

struct GridCell {
    std::string model_name;
    models::ModelSpec model;
    std::string weighting;
    std::string param_class;
    int n_train = 0;
    std::uint64_t seed = 1;
};

struct GridSpec {
    RunConfig base;
    std::vector<std::pair<std::string, models::ModelSpec>> model_list;  // empty -> base.model
    std::vector<std::string> weightings{"w_vel"};
    std::vector<std::string> classes{"c_vel"};
    std::vector<int> dataset_sizes;        // empty -> {base.dataset.n_train}
    std::vector<std::uint64_t> seeds;      // empty -> {base.seed}
    std::vector<double> psnr_grid = metrics::default_psnr_grid();
    int psnr_n = 256;
    int sample_count = 0;                  // 0 = skip generative metrics
    sampler::IntegratorConfig integrator;
    std::uint64_t eval_seed = 77;
    int workers = 1;
    std::string out_dir;

    std::vector<GridCell> cells() const {
        std::vector<std::pair<std::string, models::ModelSpec>> ms = model_list;
        if (ms.empty()) ms.emplace_back("model", base.model);
        std::vector<int> ns = dataset_sizes.empty() ? std::vector<int>{base.dataset.n_train}
                                                    : dataset_sizes;
        std::vector<std::uint64_t> ss = seeds.empty() ? std::vector<std::uint64_t>{base.seed} : seeds;
        std::vector<GridCell> out;
        for (const auto& [name, model] : ms)
            for (int n : ns)
                for (const std::string& w : weightings)
                    for (const std::string& c : classes)
                        for (std::uint64_t s : ss) out.push_back({name, model, w, c, n, s});
        return out;
    }

    void validate() const {
        base.validate();
        if (weightings.empty() || classes.empty()) throw ConfigError("grid: empty axis");
        for (const std::string& w : weightings) obj::parse_weighting(w);
        for (const std::string& c : classes) obj::parse_param_class(c);
        for (const auto& [name, m] : model_list) m.validate();
        if (psnr_n < 1) throw ConfigError("grid: psnr_n must be positive");
        if (workers < 1) throw ConfigError("grid: workers must be positive");
        integrator.validate();
        // Fair-comparison guard: simultaneously-studied models must be
        // parameter-matched within 10%.
        if (model_list.size() > 1) {
            long lo = std::numeric_limits<long>::max(), hi = 0;
            for (const auto& [name, m] : model_list) {
                const long n = models::param_count(m);
                lo = std::min(lo, n);
                hi = std::max(hi, n);
            }
            if (static_cast<double>(hi) > 1.1 * static_cast<double>(lo))
                throw ConfigError("grid: model parameter counts differ by more than 10% (" +
                                  std::to_string(lo) + " vs " + std::to_string(hi) + ")");
        }
    }
};

inline json to_json(const GridSpec& g) {
    json j;
    j["base"] = to_json(g.base);
    json ml = json::array();
    for (const auto& [name, m] : g.model_list) {
        json e = ser::to_json(m);
        e["name"] = name;
        ml.push_back(e);
    }
    j["models"] = ml;
    j["weightings"] = g.weightings;
    j["classes"] = g.classes;
    j["dataset_sizes"] = g.dataset_sizes;
    j["seeds"] = g.seeds;
    j["psnr_grid"] = g.psnr_grid;
    j["psnr_n"] = g.psnr_n;
    j["sample_count"] = g.sample_count;
    j["integrator"] = ser::to_json(g.integrator);
    j["eval_seed"] = g.eval_seed;
    j["workers"] = g.workers;
    return j;
}

inline GridSpec grid_spec_from_json(const json& j) {
    GridSpec g;
    g.base = run_config_from_json(ser::require<json>(j, "base"));
    for (const json& e : ser::require<json>(j, "models"))
        g.model_list.emplace_back(ser::require<std::string>(e, "name"), ser::model_spec_from_json(e));
    g.weightings = ser::require<std::vector<std::string>>(j, "weightings");
    g.classes = ser::require<std::vector<std::string>>(j, "classes");
    g.dataset_sizes = ser::require<std::vector<int>>(j, "dataset_sizes");
    g.seeds = ser::require<std::vector<std::uint64_t>>(j, "seeds");
    g.psnr_grid = ser::require<std::vector<double>>(j, "psnr_grid");
    g.psnr_n = ser::require<int>(j, "psnr_n");
    g.sample_count = ser::require<int>(j, "sample_count");
    g.integrator = ser::integrator_from_json(ser::require<json>(j, "integrator"));
    g.eval_seed = ser::require<std::uint64_t>(j, "eval_seed");
    g.workers = ser::require<int>(j, "workers");
    g.validate();
    return g;
}

struct CellResult {
    GridCell cell;
    bool ok = false;
    std::string failure;
    long iterations = 0;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> psnr;  // aligned with GridSpec::psnr_grid
    double mean_err = std::numeric_limits<double>::quiet_NaN();
    double cov_err = std::numeric_limits<double>::quiet_NaN();
    double energy_dist = std::numeric_limits<double>::quiet_NaN();
    double res_mean = std::numeric_limits<double>::quiet_NaN();
    double res_ratio = std::numeric_limits<double>::quiet_NaN();
    double wall_seconds = 0.0;
};

inline std::string cell_tag(const GridCell& c) {
    std::string tag = c.model_name + "_" + c.weighting + "_" + c.param_class + "_n" +
                      std::to_string(c.n_train) + "_s" + std::to_string(c.seed);
    for (char& ch : tag)
        if (ch == ':' || ch == '/' || ch == '.') ch = '-';
    return tag;
}

inline RunConfig cell_config(const GridSpec& grid, const GridCell& cell) {
    RunConfig cfg = grid.base;
    cfg.model = cell.model;
    cfg.weighting = cell.weighting;
    cfg.param_class = cell.param_class;
    cfg.dataset.n_train = cell.n_train;
    cfg.seed = cell.seed;
    // init_seed stays at grid.base.init_seed: every cell starts from
    // bit-identical parameters of the same architecture.
    cfg.out_dir = grid.out_dir.empty() ? std::string()
                                       : grid.out_dir + "/cells/" + cell_tag(cell);
    return cfg;
}

inline CellResult run_cell(const GridSpec& grid, const GridCell& cell) {
    const auto t_begin = std::chrono::steady_clock::now();
    CellResult r;
    r.cell = cell;
    try {
        const RunConfig cfg = cell_config(grid, cell);
        cfg.validate();
        TrainResult tr = train(cfg);
        r.iterations = cfg.iterations;
        r.final_loss = tr.log.empty() ? 0.0 : tr.log.back().loss;

        const obj::ParamClass cls = obj::parse_param_class(cell.param_class);
        const sampler::NetworkFn net = chunked_network(tr.model, tr.store, /*use_ema=*/true);
        const metrics::DenoiserFn den = metrics::denoiser_from_network(net, cls);
        const metrics::PsnrCurve curve =
            metrics::psnr_curve(den, tr.dataset.eval_set, grid.psnr_grid, grid.psnr_n, grid.eval_seed);
        r.psnr = curve.psnr;

        if (grid.sample_count > 0) {
            Rng gen_rng(grid.eval_seed, detail::kStreamGen);
            const TensorValue gen =
                sampler::generate(net, cls, grid.sample_count, tr.dataset.dim, grid.integrator, gen_rng);
            const metrics::MomentDistance md = metrics::moment_distance(gen, tr.dataset.eval_set);
            r.mean_err = md.mean_err;
            r.cov_err = md.cov_err_frobenius;
            r.energy_dist = md.energy_distance;
            if (tr.dataset.mode_set) {
                const metrics::ResidualStats base_stats =
                    metrics::residual_energy_stats(tr.dataset.eval_set, *tr.dataset.mode_set);
                const metrics::ResidualStats st =
                    metrics::residual_energy_stats(gen, *tr.dataset.mode_set, base_stats.mean);
                r.res_mean = st.mean;
                r.res_ratio = st.baseline_ratio;
            }
        }
        r.ok = true;
    } catch (const std::exception& e) {
        r.ok = false;
        r.failure = e.what();
    }
    r.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return r;
}

// Cells run in a small worker pool; each cell is single-threaded and owns its
// RNG streams, and a failed cell becomes a failure row instead of aborting.
inline std::vector<CellResult> run_grid(const GridSpec& grid) {
    grid.validate();
    const std::vector<GridCell> cells = grid.cells();
    std::vector<CellResult> results(cells.size());
    const int workers = std::min<int>(grid.workers, static_cast<int>(cells.size()));
    if (workers <= 1) {
        for (size_t i = 0; i < cells.size(); ++i) results[i] = run_cell(grid, cells[i]);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                while (true) {
                    const size_t i = next.fetch_add(1);
                    if (i >= cells.size()) return;
                    results[i] = run_cell(grid, cells[i]);
                }
            });
        for (std::thread& th : pool) th.join();
    }
    return results;
}

// ---- report emission -------------------------------------------------------

inline csv::Table results_table(const std::vector<CellResult>& results,
                                const std::vector<double>& psnr_grid) {
    csv::Table t;
    t.columns = {"model", "weighting", "class", "n_train", "seed", "status", "failure",
                 "iterations", "final_loss"};
    for (double g : psnr_grid) t.columns.push_back("psnr_t" + csv::format_double(g));
    t.columns.insert(t.columns.end(),
                     {"mean_err", "cov_err", "energy_distance", "res_mean", "res_ratio",
                      "wall_seconds"});
    for (const CellResult& r : results) {
        std::vector<std::string> row = {r.cell.model_name,
                                        r.cell.weighting,
                                        r.cell.param_class,
                                        std::to_string(r.cell.n_train),
                                        std::to_string(r.cell.seed),
                                        r.ok ? "ok" : "failed",
                                        r.failure,
                                        std::to_string(r.iterations),
                                        csv::format_double(r.final_loss)};
        for (size_t j = 0; j < psnr_grid.size(); ++j)
            row.push_back(csv::format_double(j < r.psnr.size()
                                                 ? r.psnr[j]
                                                 : std::numeric_limits<double>::quiet_NaN()));
        row.push_back(csv::format_double(r.mean_err));
        row.push_back(csv::format_double(r.cov_err));
        row.push_back(csv::format_double(r.energy_dist));
        row.push_back(csv::format_double(r.res_mean));
        row.push_back(csv::format_double(r.res_ratio));
        row.push_back(csv::format_double(r.wall_seconds));
        t.rows.push_back(std::move(row));
    }
    return t;
}

// CSV table, one delta-PSNR plot per (model, weighting, n, seed) pair that has
// both a c_den and a c_vel cell, and a bar chart of PSNR by weighting.
inline std::vector<std::string> emit_report(const std::vector<CellResult>& results,
                                            const std::vector<double>& psnr_grid,
                                            const std::string& out_dir_in) {
    if (results.empty()) throw ConfigError("emit_report: no results");
    const std::string out_dir = resolve_out_dir(out_dir_in);
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> files;

    const std::string csv_path = out_dir + "/grid.csv";
    io::write_text_file(csv_path, csv::serialize(results_table(results, psnr_grid)));
    files.push_back(csv_path);

    auto find_cell = [&](const CellResult& like, const std::string& cls) -> const CellResult* {
        for (const CellResult& r : results)
            if (r.ok && r.cell.model_name == like.cell.model_name &&
                r.cell.weighting == like.cell.weighting && r.cell.param_class == cls &&
                r.cell.n_train == like.cell.n_train && r.cell.seed == like.cell.seed)
                return &r;
        return nullptr;
    };
    for (const CellResult& r : results) {
        if (!r.ok || r.cell.param_class != "c_den") continue;
        const CellResult* vel = find_cell(r, "c_vel");
        if (!vel || r.psnr.size() != psnr_grid.size() || vel->psnr.size() != psnr_grid.size())
            continue;
        svg::Series delta;
        delta.name = "delta PSNR (den - vel)";
        delta.color = "#333333";
        delta.x = psnr_grid;
        for (size_t j = 0; j < psnr_grid.size(); ++j)
            delta.y.push_back(r.psnr[j] - vel->psnr[j]);
        svg::PlotOptions opt;
        GridCell named = r.cell;
        named.param_class = "den-vs-vel";
        opt.title = cell_tag(named);
        opt.x_label = "t";
        opt.y_label = "delta PSNR (dB)";
        opt.shade_sign = true;
        const std::string path = out_dir + "/delta_psnr_" + cell_tag(named) + ".svg";
        io::write_text_file(path, svg::line_plot({delta}, opt));
        files.push_back(path);
    }

    // Bar chart: mean PSNR at the last grid time per weighting, ok cells only.
    std::vector<std::string> labels;
    std::vector<double> values;
    std::vector<int> counts;
    for (const CellResult& r : results) {
        if (!r.ok || r.psnr.empty()) continue;
        const auto it = std::find(labels.begin(), labels.end(), r.cell.weighting);
        if (it == labels.end()) {
            labels.push_back(r.cell.weighting);
            values.push_back(r.psnr.back());
            counts.push_back(1);
        } else {
            const size_t i = static_cast<size_t>(it - labels.begin());
            values[i] += r.psnr.back();
            ++counts[i];
        }
    }
    for (size_t i = 0; i < values.size(); ++i) values[i] /= counts[i];
    if (!labels.empty()) {
        svg::PlotOptions opt;
        opt.title = "PSNR at final grid time by weighting";
        opt.y_label = "PSNR (dB)";
        const std::string path = out_dir + "/weighting_psnr.svg";
        io::write_text_file(path, svg::bar_chart(labels, values, opt));
        files.push_back(path);
    }
    return files;
}

}  // namespace flowdn::harness
