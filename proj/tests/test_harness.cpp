#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "flowdn/flowdn.hpp"
#include "support.hpp"

using namespace flowdn;
using harness::DatasetSpec;
using harness::GridSpec;
using harness::RunConfig;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("flowdn_" + tag)) {
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool same_params(const ParamStore& a, const ParamStore& b, bool ema_too) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        const auto& ea = a.entry(static_cast<int>(i));
        const auto& eb = b.entry(static_cast<int>(i));
        if (ea.name != eb.name || !same_bits(ea.value.data, eb.value.data)) return false;
        if (ema_too && !same_bits(ea.ema.data, eb.ema.data)) return false;
    }
    return true;
}

models::ModelSpec tiny_mlp(int input_dim, std::vector<int> hidden, int temb = 4) {
    models::ModelSpec m;
    m.kind = models::ModelSpec::Kind::Mlp;
    m.mlp.hidden_dims = std::move(hidden);
    m.mlp.activation = models::Activation::Tanh;
    m.time_embed_dim = temb;
    m.input_dim = input_dim;
    return m;
}

RunConfig quick_config(long iterations) {
    RunConfig cfg;
    cfg.dataset.kind = DatasetSpec::Kind::Gaussian;
    cfg.dataset.gaussian = oracle::GaussianDataSpec(1.3, 2);
    cfg.dataset.n_train = 64;
    cfg.dataset.n_eval = 32;
    cfg.model = tiny_mlp(2, {8});
    cfg.weighting = "w_vel";
    cfg.param_class = "c_vel";
    cfg.lr = 1e-3;
    cfg.batch_size = 16;
    cfg.iterations = iterations;
    cfg.ema_lambda = 0.9;
    cfg.log_every = 10;
    cfg.seed = 7;
    cfg.init_seed = 7;
    return cfg;
}

}  // namespace

TEST_CASE("dataset spec: dims, validation, json round-trip", "[harness]") {
    DatasetSpec g;
    g.kind = DatasetSpec::Kind::Gaussian;
    g.gaussian = oracle::GaussianDataSpec(1.5, 7);
    CHECK(g.dim() == 7);

    DatasetSpec f;
    f.kind = DatasetSpec::Kind::Fourier;
    f.fourier.grid_n = 8;
    f.fourier.modes = 3;
    CHECK(f.dim() == 64);

    DatasetSpec m;
    m.kind = DatasetSpec::Kind::Mixture;
    CHECK(m.dim() == 2);
    CHECK_THROWS_AS(m.validate(), ConfigError);  // no centers
    m.mixture.centers = {{0.0, 0.0}, {1.0, 1.0}};
    m.mixture.weights = {0.5, 0.5};
    CHECK_NOTHROW(m.validate());

    DatasetSpec bad = g;
    bad.n_train = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = g;
    bad.n_eval = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    DatasetSpec file;
    file.kind = DatasetSpec::Kind::File;
    CHECK_THROWS_AS(file.validate(), ConfigError);  // path required

    for (const DatasetSpec* s : {&g, &f, &m}) {
        const ser::json j = harness::to_json(*s);
        const DatasetSpec back = harness::dataset_spec_from_json(j);
        CHECK(ser::canonical_dump(harness::to_json(back)) == ser::canonical_dump(j));
    }
    ser::json junk = harness::to_json(g);
    junk["kind"] = "torus";
    CHECK_THROWS_AS(harness::dataset_spec_from_json(junk), ConfigError);
}

TEST_CASE("materialize: shapes, reproducibility, stream separation", "[harness]") {
    DatasetSpec spec;
    spec.kind = DatasetSpec::Kind::Gaussian;
    spec.gaussian = oracle::GaussianDataSpec(1.3, 3);
    spec.n_train = 16;
    spec.n_eval = 10;

    harness::Dataset ds = harness::materialize(spec);
    CHECK(ds.dim == 3);
    CHECK(ds.train.rows() == 16);
    CHECK(ds.train.cols() == 3);
    CHECK(ds.eval_set.rows() == 10);
    CHECK_FALSE(ds.mode_set.has_value());

    harness::Dataset again = harness::materialize(spec);
    CHECK(same_bits(ds.train.data, again.train.data));
    CHECK(same_bits(ds.eval_set.data, again.eval_set.data));
    // train and eval come from distinct streams: first rows must differ
    bool differs = false;
    for (int j = 0; j < 3; ++j) differs |= ds.train.at(0, j) != ds.eval_set.at(0, j);
    CHECK(differs);

    SECTION("bootstrap batches draw real training rows") {
        Rng rng(3);
        const TensorValue b = ds.draw_batch(9, rng);
        CHECK(b.rows() == 9);
        for (int i = 0; i < 9; ++i) {
            bool found = false;
            for (int r = 0; r < 16 && !found; ++r) {
                bool eq = true;
                for (int j = 0; j < 3; ++j) eq &= b.at(i, j) == ds.train.at(r, j);
                found = eq;
            }
            CHECK(found);
        }
        CHECK_THROWS_AS(ds.draw_batch(0, rng), ConfigError);
    }

    SECTION("streaming dataset has no train tensor but draws fresh batches") {
        DatasetSpec stream = spec;
        stream.n_train = 0;
        harness::Dataset sd = harness::materialize(stream);
        CHECK(sd.train.numel() == 0);
        Rng r1(5), r2(5);
        const TensorValue a = sd.draw_batch(4, r1);
        const TensorValue b = sd.draw_batch(4, r2);
        CHECK(a.rows() == 4);
        CHECK(same_bits(a.data, b.data));
    }

    SECTION("fourier kind records its mode set") {
        DatasetSpec f;
        f.kind = DatasetSpec::Kind::Fourier;
        f.fourier.grid_n = 8;
        f.fourier.modes = 3;
        f.n_train = 0;
        f.n_eval = 4;
        harness::Dataset fd = harness::materialize(f);
        CHECK(fd.dim == 64);
        REQUIRE(fd.mode_set.has_value());
        CHECK(fd.mode_set->real_dof() == 6);
        CHECK(fd.header.contains("mode_set"));
        CHECK(fd.header.contains("spec"));

        DatasetSpec f2 = f;
        f2.fourier.dataset_seed = f.fourier.dataset_seed + 1;
        harness::Dataset fd2 = harness::materialize(f2);
        CHECK_FALSE(same_bits(fd.eval_set.data, fd2.eval_set.data));
    }
}

TEST_CASE("materialize: file kind round-trips data and mode set", "[harness]") {
    TempDir tmp("harness_file");
    DatasetSpec f;
    f.kind = DatasetSpec::Kind::Fourier;
    f.fourier.grid_n = 8;
    f.fourier.modes = 3;
    f.n_train = 0;
    f.n_eval = 5;
    harness::Dataset src = harness::materialize(f);
    const std::string path = tmp.file("set.bin");
    io::save_dataset(path, src.header, src.eval_set);

    DatasetSpec file;
    file.kind = DatasetSpec::Kind::File;
    file.path = path;
    harness::Dataset back = harness::materialize(file);
    CHECK(back.dim == 64);
    CHECK(same_bits(back.train.data, src.eval_set.data));
    CHECK(same_bits(back.eval_set.data, src.eval_set.data));
    REQUIRE(back.mode_set.has_value());
    CHECK(back.mode_set->real_dof() == src.mode_set->real_dof());
    CHECK(back.mode_set->support == src.mode_set->support);
}

TEST_CASE("run config: validation and config-file round-trip", "[harness]") {
    RunConfig cfg = quick_config(5);
    CHECK_NOTHROW(cfg.validate());

    auto broken = [&](auto mutate) {
        RunConfig c = cfg;
        mutate(c);
        CHECK_THROWS_AS(c.validate(), ConfigError);
    };
    broken([](RunConfig& c) { c.lr = 0.0; });
    broken([](RunConfig& c) { c.lr_schedule = "staircase"; });
    broken([](RunConfig& c) { c.batch_size = 0; });
    broken([](RunConfig& c) { c.iterations = -1; });
    broken([](RunConfig& c) { c.ema_lambda = 1.0; });
    broken([](RunConfig& c) { c.ema_lambda = -0.1; });
    broken([](RunConfig& c) { c.t_lo = 0.9; c.t_hi = 0.1; });
    broken([](RunConfig& c) { c.log_every = 0; });
    broken([](RunConfig& c) { c.weighting = "w_magic"; });
    broken([](RunConfig& c) { c.param_class = "c_magic"; });
    broken([](RunConfig& c) { c.model.input_dim = 3; });  // dataset is 2-d

    // canonical flat text form parses back to the identical config
    const std::string text = harness::config_file_text(cfg);
    CHECK(text.find("dataset.kind") != std::string::npos);
    const RunConfig parsed = harness::run_config_from_json(ser::json::parse(text));
    CHECK(ser::canonical_dump(harness::to_json(parsed)) ==
          ser::canonical_dump(harness::to_json(cfg)));
    // nested form is accepted too
    const RunConfig nested = harness::run_config_from_json(harness::to_json(cfg));
    CHECK(ser::canonical_dump(harness::to_json(nested)) ==
          ser::canonical_dump(harness::to_json(cfg)));
}

TEST_CASE("train: zero iterations leaves the shared init untouched", "[harness]") {
    RunConfig cfg = quick_config(0);
    cfg.init_seed = 41;
    harness::TrainResult res = harness::train(cfg);
    CHECK(res.log.empty());
    CHECK(res.store.step_count() == 0);
    CHECK_FALSE(res.store.ema_initialized());

    ParamStore expect;
    Rng init_rng(cfg.init_seed, harness::detail::kStreamInit);
    models::init_params(cfg.model, expect, init_rng);
    CHECK(same_params(res.store, expect, /*ema_too=*/false));
}

TEST_CASE("train: bit-identical reruns, sensitive to both seeds", "[harness]") {
    RunConfig cfg = quick_config(40);
    harness::TrainResult a = harness::train(cfg);
    harness::TrainResult b = harness::train(cfg);
    REQUIRE(a.log.size() == b.log.size());
    REQUIRE(!a.log.empty());
    for (size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].step == b.log[i].step);
        CHECK(std::memcmp(&a.log[i].loss, &b.log[i].loss, sizeof(double)) == 0);
    }
    CHECK(same_params(a.store, b.store, /*ema_too=*/true));
    CHECK(a.store.step_count() == 40);
    // log covers step 1, multiples of log_every, and the last step
    CHECK(a.log.front().step == 1);
    CHECK(a.log.back().step == 40);

    RunConfig data_seed = cfg;
    data_seed.seed += 1;
    harness::TrainResult c = harness::train(data_seed);
    CHECK(c.log.back().loss != a.log.back().loss);

    RunConfig init_seed = cfg;
    init_seed.init_seed += 1;
    harness::TrainResult d = harness::train(init_seed);
    CHECK_FALSE(same_params(a.store, d.store, /*ema_too=*/false));
}

TEST_CASE("train: cosine schedule starts at full lr and changes the trajectory", "[harness]") {
    RunConfig one = quick_config(1);
    RunConfig one_cos = one;
    one_cos.lr_schedule = "cosine";
    // step 1 multiplies lr by 0.5*(1+cos(0)) = 1, so a single step is bit-identical
    CHECK(same_params(harness::train(one).store, harness::train(one_cos).store, true));

    RunConfig many = quick_config(30);
    RunConfig many_cos = many;
    many_cos.lr_schedule = "cosine";
    CHECK_FALSE(same_params(harness::train(many).store, harness::train(many_cos).store, false));

    const ser::json j = harness::to_json(many_cos);
    CHECK(j.at("lr_schedule") == "cosine");
    CHECK(harness::run_config_from_json(j).lr_schedule == "cosine");
}

TEST_CASE("train: on-disk artifacts mirror the in-memory run", "[harness]") {
    TempDir tmp("harness_train");
    RunConfig cfg = quick_config(20);
    cfg.log_every = 7;
    cfg.out_dir = tmp.file("run");
    harness::TrainResult res = harness::train(cfg);

    const std::string cfg_text = io::read_text_file(cfg.out_dir + "/config.json");
    CHECK(cfg_text == harness::config_file_text(cfg));
    const RunConfig parsed = harness::run_config_from_json(ser::json::parse(cfg_text));
    CHECK(parsed.iterations == 20);

    const csv::Table log = csv::parse(io::read_text_file(cfg.out_dir + "/train_log.csv"));
    REQUIRE(log.columns == std::vector<std::string>{"step", "loss"});
    REQUIRE(log.rows.size() == res.log.size());
    const std::vector<long> want_steps{1, 7, 14, 20};
    REQUIRE(res.log.size() == want_steps.size());
    for (size_t i = 0; i < res.log.size(); ++i) {
        CHECK(res.log[i].step == want_steps[i]);
        CHECK(std::stol(log.cell(i, "step")) == res.log[i].step);
        CHECK(std::stod(log.cell(i, "loss")) == res.log[i].loss);  // shortest form re-parses exactly
    }

    const io::LoadedCheckpoint ck = io::load_checkpoint(cfg.out_dir + "/checkpoint.bin");
    CHECK(same_params(ck.store, res.store, /*ema_too=*/true));
    CHECK(ck.store.step_count() == 20);
    CHECK(ck.manifest.at("summary").at("iterations").get<long>() == 20);
    CHECK(ck.manifest.at("config").at("iterations").get<long>() == 20);
    CHECK(ck.manifest.at("config").at("dataset.kind").get<std::string>() == "gaussian");
}

// Train a small net on the analytically solvable gaussian task and compare its
// achieved posterior-mean loss against the closed-form optimum on a fresh
// monte-carlo sample. The zero predictor gives a scale for "did not learn".
TEST_CASE("train: approaches the analytic denoising optimum", "[harness]") {
    const double tau = 1.4;
    RunConfig cfg;
    cfg.dataset.kind = DatasetSpec::Kind::Gaussian;
    cfg.dataset.gaussian = oracle::GaussianDataSpec(tau, 2);
    cfg.dataset.n_train = 0;  // stream fresh data
    cfg.dataset.n_eval = 8;
    cfg.model = tiny_mlp(2, {32, 32}, 8);
    cfg.model.mlp.activation = models::Activation::Gelu;
    cfg.weighting = "w_den";
    cfg.param_class = "c_den";
    cfg.lr = 2e-3;
    cfg.batch_size = 96;
    cfg.iterations = 4000;
    cfg.ema_lambda = 0.999;
    cfg.log_every = 500;
    cfg.seed = 3;
    cfg.init_seed = 3;
    harness::TrainResult res = harness::train(cfg);

    // training moved the loss: first entry is the zero-output init
    CHECK(res.log.back().loss < 0.8 * res.log.front().loss);

    Rng mc(977, 0x6d63);
    const int chunk = 500, chunks = 40;
    double loss_hat = 0.0, loss_star = 0.0, loss_zero = 0.0;
    for (int c = 0; c < chunks; ++c) {
        TensorValue x1 = TensorValue::zeros({chunk, 2});
        TensorValue xt = TensorValue::zeros({chunk, 2});
        std::vector<double> t(chunk);
        for (int i = 0; i < chunk; ++i) {
            t[i] = mc.uniform(cfg.t_lo, cfg.t_hi);
            for (int j = 0; j < 2; ++j) {
                const double d = tau * mc.normal();
                const double n = mc.normal();
                x1.at(i, j) = d;
                xt.at(i, j) = (1.0 - t[i]) * n + t[i] * d;
            }
        }
        const TensorValue dhat = models::eval_forward(cfg.model, res.store, /*use_ema=*/true, xt, t);
        for (int i = 0; i < chunk; ++i) {
            const double denom = t[i] * t[i] * tau * tau + (1.0 - t[i]) * (1.0 - t[i]);
            for (int j = 0; j < 2; ++j) {
                const double dstar = tau * tau * t[i] * xt.at(i, j) / denom;
                loss_hat += (dhat.at(i, j) - x1.at(i, j)) * (dhat.at(i, j) - x1.at(i, j));
                loss_star += (dstar - x1.at(i, j)) * (dstar - x1.at(i, j));
                loss_zero += x1.at(i, j) * x1.at(i, j);
            }
        }
    }
    CAPTURE(loss_hat, loss_star, loss_zero);
    CHECK(loss_star < loss_zero);          // sanity: the optimum beats "predict 0"
    CHECK(loss_hat < 0.55 * loss_zero);    // the net actually learned
    CHECK(loss_hat / loss_star < 1.2);     // and sits near the analytic floor
}

TEST_CASE("chunked network equals whole-batch evaluation", "[harness]") {
    models::ModelSpec spec = tiny_mlp(3, {6});
    ParamStore store;
    Rng rng(11);
    models::init_params(spec, store, rng);
    for (size_t i = 0; i < store.size(); ++i)  // randomize the zero head too
        for (double& v : store.entry(static_cast<int>(i)).value.data) v += 0.1 * rng.normal();

    TensorValue x = TensorValue::zeros({11, 3});
    for (double& v : x.data) v = rng.normal();
    const sampler::NetworkFn net = harness::chunked_network(spec, store, /*use_ema=*/true, /*chunk=*/4);
    const TensorValue whole = models::eval_forward(spec, store, true, x, std::vector<double>(11, 0.37));
    const TensorValue split = net(x, 0.37);
    CHECK(same_bits(whole.data, split.data));
}

TEST_CASE("grid: cell enumeration and shared init across cells", "[harness]") {
    TempDir tmp("harness_grid_init");
    GridSpec grid;
    grid.base = quick_config(0);
    grid.weightings = {"w_den", "w_vel"};
    grid.classes = {"c_vel"};
    grid.seeds = {5, 9};
    grid.psnr_grid = {0.3, 0.9};
    grid.psnr_n = 8;
    grid.out_dir = tmp.file("grid");

    const std::vector<harness::GridCell> cells = grid.cells();
    REQUIRE(cells.size() == 4);
    CHECK(cells[0].weighting == "w_den");
    CHECK(cells[0].seed == 5);
    CHECK(cells[1].seed == 9);
    CHECK(cells[2].weighting == "w_vel");
    for (const harness::GridCell& c : cells) {
        const RunConfig cfg = harness::cell_config(grid, c);
        CHECK(cfg.init_seed == grid.base.init_seed);  // shared by construction
        CHECK(cfg.seed == c.seed);
        CHECK(cfg.weighting == c.weighting);
    }

    const std::vector<harness::CellResult> results = harness::run_grid(grid);
    REQUIRE(results.size() == 4);
    io::LoadedCheckpoint first;
    for (size_t i = 0; i < results.size(); ++i) {
        REQUIRE(results[i].ok);
        const std::string tag = harness::cell_tag(results[i].cell);
        io::LoadedCheckpoint ck = io::load_checkpoint(tmp.file("grid") + "/cells/" + tag +
                                                      "/checkpoint.bin");
        if (i == 0)
            first = std::move(ck);
        else  // zero training steps: every cell still holds the one shared init
            CHECK(same_params(first.store, ck.store, /*ema_too=*/false));
    }
}

TEST_CASE("grid: single cell reproduces a standalone run exactly", "[harness]") {
    GridSpec grid;
    grid.base = quick_config(30);
    grid.base.batch_size = 8;
    grid.psnr_grid = {0.3, 0.9};
    grid.psnr_n = 8;
    grid.sample_count = 12;
    grid.integrator.steps = 6;

    const std::vector<harness::CellResult> results = harness::run_grid(grid);
    REQUIRE(results.size() == 1);
    const harness::CellResult& r = results[0];
    REQUIRE(r.ok);
    CHECK(r.iterations == 30);
    CHECK(std::isfinite(r.mean_err));
    CHECK(std::isfinite(r.cov_err));
    CHECK(std::isfinite(r.energy_dist));
    CHECK(std::isnan(r.res_mean));  // gaussian data carries no mode set

    const RunConfig cfg = harness::cell_config(grid, grid.cells()[0]);
    harness::TrainResult tr = harness::train(cfg);
    CHECK(r.final_loss == tr.log.back().loss);
    const metrics::DenoiserFn den = metrics::denoiser_from_network(
        harness::chunked_network(tr.model, tr.store, true), obj::parse_param_class(cfg.param_class));
    const metrics::PsnrCurve curve =
        metrics::psnr_curve(den, tr.dataset.eval_set, grid.psnr_grid, grid.psnr_n, grid.eval_seed);
    REQUIRE(r.psnr.size() == curve.psnr.size());
    CHECK(same_bits(r.psnr, curve.psnr));
}

TEST_CASE("grid: weighting/class study table has one row per cell in order", "[harness]") {
    GridSpec grid;
    grid.base = quick_config(2);
    grid.base.batch_size = 4;
    grid.base.dataset.n_train = 16;
    grid.base.dataset.n_eval = 16;
    grid.weightings = {"w_den", "w_vel", "w_classic:19"};
    grid.classes = {"c_den", "c_vel"};
    grid.psnr_grid = {0.3, 0.9};
    grid.psnr_n = 4;

    const std::vector<harness::CellResult> results = harness::run_grid(grid);
    REQUIRE(results.size() == 6);
    for (const harness::CellResult& r : results) CHECK(r.ok);

    const csv::Table t = harness::results_table(results, grid.psnr_grid);
    CHECK(t.columns.size() == 9 + grid.psnr_grid.size() + 6);
    REQUIRE(t.rows.size() == 6);
    const std::vector<std::pair<std::string, std::string>> want{
        {"w_den", "c_den"},   {"w_den", "c_vel"},   {"w_vel", "c_den"},
        {"w_vel", "c_vel"},   {"w_classic:19", "c_den"}, {"w_classic:19", "c_vel"}};
    for (size_t i = 0; i < want.size(); ++i) {
        CHECK(t.cell(i, "weighting") == want[i].first);
        CHECK(t.cell(i, "class") == want[i].second);
        CHECK(t.cell(i, "status") == "ok");
    }

    SECTION("dataset-size axis multiplies the grid") {
        grid.weightings = {"w_vel"};
        grid.classes = {"c_vel"};
        grid.dataset_sizes = {4, 12};
        const std::vector<harness::CellResult> by_n = harness::run_grid(grid);
        REQUIRE(by_n.size() == 2);
        CHECK(by_n[0].cell.n_train == 4);
        CHECK(by_n[1].cell.n_train == 12);
        CHECK(by_n[0].ok);
        CHECK(by_n[1].ok);
    }
}

TEST_CASE("grid: a failing cell becomes a failure row, the sweep continues", "[harness]") {
    GridSpec grid;
    grid.base = quick_config(2);
    grid.base.batch_size = 4;
    grid.psnr_grid = {0.5};
    grid.psnr_n = 4;
    // second model's input does not match the 2-d dataset; parameter counts
    // are matched (74 vs 80) so the fairness guard stays quiet
    grid.model_list = {{"fits", tiny_mlp(2, {8})}, {"wrong_dim", tiny_mlp(3, {7})}};

    const std::vector<harness::CellResult> results = harness::run_grid(grid);
    REQUIRE(results.size() == 2);
    CHECK(results[0].ok);
    CHECK_FALSE(results[1].ok);
    CHECK(results[1].failure.find("does not match dataset dim") != std::string::npos);
    CHECK(results[1].psnr.empty());
    CHECK(std::isnan(results[1].final_loss));

    const csv::Table t = harness::results_table(results, grid.psnr_grid);
    CHECK(t.cell(0, "status") == "ok");
    CHECK(t.cell(1, "status") == "failed");
    CHECK(!t.cell(1, "failure").empty());
}

TEST_CASE("grid: cell results do not depend on sweep order", "[harness]") {
    GridSpec fwd;
    fwd.base = quick_config(25);
    fwd.base.dataset.n_train = 48;
    fwd.weightings = {"w_den", "w_vel"};
    fwd.psnr_grid = {0.3, 0.9};
    fwd.psnr_n = 8;
    GridSpec rev = fwd;
    rev.weightings = {"w_vel", "w_den"};

    const std::vector<harness::CellResult> a = harness::run_grid(fwd);
    const std::vector<harness::CellResult> b = harness::run_grid(rev);
    REQUIRE(a.size() == 2);
    REQUIRE(b.size() == 2);
    for (const harness::CellResult& ra : a) {
        const harness::CellResult* rb = nullptr;
        for (const harness::CellResult& cand : b)
            if (cand.cell.weighting == ra.cell.weighting) rb = &cand;
        REQUIRE(rb != nullptr);
        CHECK(rb->final_loss == ra.final_loss);
        CHECK(same_bits(rb->psnr, ra.psnr));
    }
}

TEST_CASE("grid: spec json round-trip and parameter-budget guard", "[harness]") {
    GridSpec grid;
    grid.base = quick_config(3);
    grid.model_list = {{"a", tiny_mlp(2, {8})}, {"b", tiny_mlp(3, {7})}};  // 74 vs 80 params
    grid.weightings = {"w_den", "w_pow:1.5"};
    grid.classes = {"c_den", "c_noise"};
    grid.dataset_sizes = {8, 16};
    grid.seeds = {1, 2, 3};
    grid.psnr_grid = {0.25, 0.75};
    grid.psnr_n = 12;
    grid.sample_count = 4;
    grid.integrator.steps = 9;
    grid.integrator.method = sampler::Method::Heun;
    grid.eval_seed = 123;
    CHECK_NOTHROW(grid.validate());
    CHECK(grid.cells().size() == 2 * 2 * 2 * 2 * 3);

    const ser::json j = harness::to_json(grid);
    const GridSpec back = harness::grid_spec_from_json(j);
    CHECK(ser::canonical_dump(harness::to_json(back)) == ser::canonical_dump(j));

    GridSpec fat = grid;
    fat.model_list = {{"small", tiny_mlp(2, {8})}, {"big", tiny_mlp(2, {16})}};
    CHECK_THROWS_AS(fat.validate(), ConfigError);  // 74 vs 146 params
    CHECK_THROWS_AS(harness::run_grid(fat), ConfigError);
}

TEST_CASE("report: csv plus svg artifacts, empty input rejected", "[harness]") {
    TempDir tmp("harness_report");
    GridSpec grid;
    grid.base = quick_config(2);
    grid.base.batch_size = 4;
    grid.weightings = {"w_vel"};
    grid.classes = {"c_den", "c_vel"};
    grid.psnr_grid = {0.3, 0.9};
    grid.psnr_n = 4;

    const std::vector<harness::CellResult> results = harness::run_grid(grid);
    REQUIRE(results.size() == 2);
    const std::vector<std::string> files =
        harness::emit_report(results, grid.psnr_grid, tmp.file("report"));
    REQUIRE(files.size() == 3);  // grid.csv + one den-vs-vel delta plot + bar chart
    for (const std::string& f : files) CHECK(fs::exists(f));

    const csv::Table t = csv::parse(io::read_text_file(files[0]));
    CHECK(t.rows.size() == 2);
    CHECK(t.columns.size() == 9 + 2 + 6);

    const std::string delta_svg = io::read_text_file(files[1]);
    CHECK(testsup::well_formed_xml(delta_svg));
    CHECK(delta_svg.find("delta PSNR") != std::string::npos);
    CHECK(testsup::well_formed_xml(io::read_text_file(files[2])));

    CHECK_THROWS_AS(harness::emit_report({}, grid.psnr_grid, tmp.file("empty")), ConfigError);
}
