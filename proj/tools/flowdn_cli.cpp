// Command-line front end: train / grid / sample / eval-psnr / gen-dataset /
// oracle-check. Configs are JSON files; FLOWDN_OUT_ROOT (if set) prefixes
// relative output paths.
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "flowdn/flowdn.hpp"

namespace {

using namespace flowdn;
using ser::json;

json load_json_file(const std::string& path) {
    try {
        return json::parse(io::read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse " + path + ": " + e.what());
    }
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        out.push_back(std::stod(s.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    if (out.empty()) throw ConfigError("empty list");
    return out;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    harness::RunConfig cfg = harness::run_config_from_json(load_json_file(config_path));
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    const harness::TrainResult res = harness::train(cfg);
    std::printf("trained %ld iterations, final loss %.6g, %ld params\n", cfg.iterations,
                res.log.empty() ? 0.0 : res.log.back().loss, res.store.num_scalars());
    if (!cfg.out_dir.empty())
        std::printf("checkpoint: %s/checkpoint.bin\n", harness::resolve_out_dir(cfg.out_dir).c_str());
    return 0;
}

int cmd_grid(const std::string& config_path, const std::string& out_dir) {
    harness::GridSpec grid = harness::grid_spec_from_json(load_json_file(config_path));
    if (!out_dir.empty()) grid.out_dir = out_dir;
    if (grid.out_dir.empty()) throw ConfigError("grid: an output directory is required");
    const std::vector<harness::CellResult> results = harness::run_grid(grid);
    const std::vector<std::string> files =
        harness::emit_report(results, grid.psnr_grid, grid.out_dir);
    int failed = 0;
    for (const harness::CellResult& r : results)
        if (!r.ok) {
            ++failed;
            std::fprintf(stderr, "cell %s failed: %s\n", harness::cell_tag(r.cell).c_str(),
                         r.failure.c_str());
        }
    std::printf("grid: %zu cells, %d failed; report:\n", results.size(), failed);
    for (const std::string& f : files) std::printf("  %s\n", f.c_str());
    return 0;
}

int cmd_sample(const std::string& ckpt_path, int count, int steps, const std::string& method,
               std::uint64_t seed, const std::string& out_path, double t_clamp) {
    const io::LoadedCheckpoint ck = io::load_checkpoint(ckpt_path);
    const models::ModelSpec model = ser::model_spec_from_json(ck.manifest.at("model"));
    const json cfg_flat = ck.manifest.at("config");
    const json cfg = ser::unflatten(cfg_flat);
    const obj::ParamClass cls =
        obj::parse_param_class(ser::require<std::string>(cfg, "class"));

    sampler::IntegratorConfig icfg;
    icfg.method = sampler::parse_method(method);
    icfg.steps = steps;
    icfg.t_clamp = t_clamp;
    Rng rng(seed, /*stream=*/0x73616d70);
    const sampler::NetworkFn net = harness::chunked_network(model, ck.store, /*use_ema=*/true);
    const TensorValue out = sampler::generate(net, cls, count, model.input_dim, icfg, rng);

    json header;
    header["source_checkpoint"] = ckpt_path;
    header["integrator"] = ser::to_json(icfg);
    header["seed"] = seed;
    header["class"] = obj::format_param_class(cls);
    if (cfg.contains("dataset")) {
        const harness::DatasetSpec dspec = harness::dataset_spec_from_json(cfg.at("dataset"));
        header["spec"] = harness::to_json(dspec);
        if (dspec.kind == harness::DatasetSpec::Kind::Fourier)
            header["mode_set"] = ser::to_json(data::select_modes(dspec.fourier));
    }
    io::save_dataset(out_path, header, out);
    std::printf("wrote %d samples of dim %d to %s\n", out.rows(), out.cols(), out_path.c_str());
    return 0;
}

int cmd_eval_psnr(const std::string& ckpt_path, const std::string& data_path,
                  const std::string& grid_str, int n, std::uint64_t seed,
                  const std::string& out_csv, const std::string& out_svg) {
    const io::LoadedCheckpoint ck = io::load_checkpoint(ckpt_path);
    const models::ModelSpec model = ser::model_spec_from_json(ck.manifest.at("model"));
    const json cfg = ser::unflatten(ck.manifest.at("config"));
    const obj::ParamClass cls = obj::parse_param_class(ser::require<std::string>(cfg, "class"));

    TensorValue eval_set;
    if (!data_path.empty()) {
        eval_set = io::load_dataset(data_path).data;
    } else {
        const harness::DatasetSpec dspec = harness::dataset_spec_from_json(cfg.at("dataset"));
        eval_set = harness::materialize(dspec).eval_set;
    }
    const std::vector<double> grid =
        grid_str.empty() ? metrics::default_psnr_grid() : parse_list(grid_str);
    const sampler::NetworkFn net = harness::chunked_network(model, ck.store, /*use_ema=*/true);
    const metrics::DenoiserFn den = metrics::denoiser_from_network(net, cls);
    const metrics::PsnrCurve curve = metrics::psnr_curve(den, eval_set, grid, n, seed);

    csv::Table t;
    t.columns = {"t", "psnr", "n", "seed", "peak"};
    for (size_t i = 0; i < grid.size(); ++i)
        t.rows.push_back({csv::format_double(grid[i]), csv::format_double(curve.psnr[i]),
                          std::to_string(n), std::to_string(seed),
                          csv::format_double(metrics::kPsnrPeak)});
    io::write_text_file(out_csv, csv::serialize(t));
    std::printf("wrote %s\n", out_csv.c_str());
    if (!out_svg.empty()) {
        svg::Series s;
        s.name = "PSNR";
        s.x = grid;
        s.y = curve.psnr;
        svg::PlotOptions opt;
        opt.title = "PSNR vs t";
        opt.x_label = "t";
        opt.y_label = "PSNR (dB)";
        io::write_text_file(out_svg, svg::line_plot({s}, opt));
        std::printf("wrote %s\n", out_svg.c_str());
    }
    for (size_t i = 0; i < grid.size(); ++i)
        std::printf("t=%.3g  psnr=%.3f dB\n", grid[i], curve.psnr[i]);
    return 0;
}

int cmd_gen_dataset(const std::string& config_path, int count, const std::string& out_path) {
    harness::DatasetSpec spec = harness::dataset_spec_from_json(load_json_file(config_path));
    spec.n_train = count;
    spec.n_eval = 1;  // unused below; the file holds the training draw
    const harness::Dataset ds = harness::materialize(spec);
    json header = ds.header;
    header["spec"] = harness::to_json(spec);
    io::save_dataset(out_path, header, ds.train);
    std::printf("wrote %d samples of dim %d to %s\n", ds.train.rows(), ds.train.cols(),
                out_path.c_str());
    return 0;
}

int cmd_oracle_check(const std::string& tau_str, const std::string& t_str,
                     const std::string& out_csv) {
    const std::vector<double> taus = parse_list(tau_str);
    const std::vector<double> ts = parse_list(t_str);
    csv::Table table;
    table.columns = {"tau", "t", "posterior_mean_coeff", "posterior_variance", "optimal_weight"};
    for (double tau : taus)
        for (double t : ts) {
            table.rows.push_back({csv::format_double(tau), csv::format_double(t),
                                  csv::format_double(oracle::posterior_mean_coeff(t, tau)),
                                  csv::format_double(oracle::posterior_variance(t, tau)),
                                  csv::format_double(oracle::optimal_weight(t, tau))});
        }
    const std::string text = csv::serialize(table);
    if (!out_csv.empty()) {
        io::write_text_file(out_csv, text);
        std::printf("wrote %s\n", out_csv.c_str());
    } else {
        std::fputs(text.c_str(), stdout);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flow-matching denoiser lab: decoupled loss weightings and parametrizations"};
    app.require_subcommand(1);

    std::string config_path, out_dir, ckpt_path, data_path, out_path, out_csv, out_svg;
    std::string method = "euler", grid_str, tau_str = "0.5,1,2", t_str = "0.1,0.3,0.6,0.9,0.95";
    int count = 1000, steps = 200, n_eval = 256;
    std::uint64_t seed = 1;
    double t_clamp = 1e-3;

    CLI::App* train = app.add_subcommand("train", "train one model from a run config");
    train->add_option("--config", config_path, "run config JSON")->required();
    train->add_option("--out", out_dir, "output directory (overrides config)");

    CLI::App* grid = app.add_subcommand("grid", "run a weighting x class grid");
    grid->add_option("--config", config_path, "grid config JSON")->required();
    grid->add_option("--out", out_dir, "output directory (overrides config)");

    CLI::App* sample = app.add_subcommand("sample", "generate samples from a checkpoint");
    sample->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    sample->add_option("--count", count, "number of samples");
    sample->add_option("--steps", steps, "integration steps");
    sample->add_option("--method", method, "euler|heun");
    sample->add_option("--seed", seed, "rng seed");
    sample->add_option("--t-clamp", t_clamp, "time clamp");
    sample->add_option("--out", out_path, "output dataset file")->required();

    CLI::App* eval = app.add_subcommand("eval-psnr", "PSNR curve of a checkpoint's denoiser");
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--data", data_path, "dataset file (default: rebuild from config)");
    eval->add_option("--grid", grid_str, "comma-separated t grid");
    eval->add_option("--n", n_eval, "images per grid point");
    eval->add_option("--seed", seed, "rng seed");
    eval->add_option("--out-csv", out_csv, "CSV output path")->required();
    eval->add_option("--out-svg", out_svg, "SVG plot path");

    CLI::App* gen = app.add_subcommand("gen-dataset", "materialize a dataset file");
    gen->add_option("--config", config_path, "dataset spec JSON")->required();
    gen->add_option("--count", count, "number of samples");
    gen->add_option("--out", out_path, "output dataset file")->required();

    CLI::App* oracle_cmd = app.add_subcommand("oracle-check", "Gaussian oracle table for a tau sweep");
    oracle_cmd->add_option("--tau-list", tau_str, "comma-separated taus");
    oracle_cmd->add_option("--t-grid", t_str, "comma-separated times");
    oracle_cmd->add_option("--out-csv", out_csv, "CSV output path (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, out_dir);
        if (grid->parsed()) return cmd_grid(config_path, out_dir);
        if (sample->parsed())
            return cmd_sample(ckpt_path, count, steps, method, seed, out_path, t_clamp);
        if (eval->parsed())
            return cmd_eval_psnr(ckpt_path, data_path, grid_str, n_eval, seed, out_csv, out_svg);
        if (gen->parsed()) return cmd_gen_dataset(config_path, count, out_path);
        if (oracle_cmd->parsed()) return cmd_oracle_check(tau_str, t_str, out_csv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
