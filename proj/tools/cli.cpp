#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>

#include "probcontour/errors.hpp"
#include "probcontour/inference.hpp"
#include "probcontour/metrics.hpp"
#include "probcontour/plot.hpp"

namespace probcontour::cli {

namespace {

void reject_unknown(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError("config error at " + path + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError("config error at " + path + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config error at /") + key + ": wrong type");
    }
}

SynthConfig parse_synth(const json& j) {
    reject_unknown(j, "/synth",
                   {"count", "height", "width", "vertex_count", "radius_min", "radius_max",
                    "wall_min", "wall_max", "harmonic_amp_max", "center_jitter_frac", "contrast",
                    "noise_std", "spacing_mm", "split_train", "split_val"});
    SynthConfig c;
    c.count = get_or(j, "count", c.count);
    c.height = get_or(j, "height", c.height);
    c.width = get_or(j, "width", c.width);
    c.vertex_count = get_or(j, "vertex_count", c.vertex_count);
    c.radius_min = get_or(j, "radius_min", c.radius_min);
    c.radius_max = get_or(j, "radius_max", c.radius_max);
    c.wall_min = get_or(j, "wall_min", c.wall_min);
    c.wall_max = get_or(j, "wall_max", c.wall_max);
    if (j.contains("harmonic_amp_max")) {
        const auto v = j.at("harmonic_amp_max").get<std::vector<double>>();
        if (v.size() != 4) throw ConfigError("config error at /synth/harmonic_amp_max: need 4 values");
        std::copy(v.begin(), v.end(), c.harmonic_amp_max.begin());
    }
    c.center_jitter_frac = get_or(j, "center_jitter_frac", c.center_jitter_frac);
    c.contrast = get_or(j, "contrast", c.contrast);
    c.noise_std = get_or(j, "noise_std", c.noise_std);
    c.spacing_mm = get_or(j, "spacing_mm", c.spacing_mm);
    c.split_train = get_or(j, "split_train", c.split_train);
    c.split_val = get_or(j, "split_val", c.split_val);
    return c;
}

}  // namespace

RunConfig RunConfig::from_json(const json& doc) {
    reject_unknown(doc, "/", {"seed", "mode", "synth", "pca", "train", "loss"});
    if (!doc.contains("seed")) {
        throw ConfigError("config error at /: missing required key 'seed'");
    }
    RunConfig cfg;
    cfg.seed = doc.at("seed").get<std::uint64_t>();
    cfg.mode = head_mode_from_string(get_or<std::string>(doc, "mode", "probabilistic"));

    if (doc.contains("synth")) cfg.synth = parse_synth(doc.at("synth"));
    cfg.synth.seed = cfg.seed;

    if (doc.contains("pca")) {
        reject_unknown(doc.at("pca"), "/pca", {"num_components"});
        cfg.pca_components = get_or(doc.at("pca"), "num_components", cfg.pca_components);
    }

    if (doc.contains("train")) {
        const json& t = doc.at("train");
        reject_unknown(t, "/train",
                       {"learning_rate", "batch_size", "epochs", "patience", "checkpoint_every",
                        "arch", "rmsprop_decay", "rmsprop_epsilon"});
        cfg.train.learning_rate = get_or(t, "learning_rate", cfg.train.learning_rate);
        cfg.train.batch_size = get_or(t, "batch_size", cfg.train.batch_size);
        cfg.train.epochs = get_or(t, "epochs", cfg.train.epochs);
        cfg.train.patience = get_or(t, "patience", cfg.train.patience);
        cfg.train.checkpoint_every = get_or(t, "checkpoint_every", cfg.train.checkpoint_every);
        cfg.train.arch = get_or<std::string>(t, "arch", cfg.train.arch);
        cfg.train.rmsprop_decay = get_or(t, "rmsprop_decay", cfg.train.rmsprop_decay);
        cfg.train.rmsprop_epsilon = get_or(t, "rmsprop_epsilon", cfg.train.rmsprop_epsilon);
    }

    if (doc.contains("loss")) {
        const json& l = doc.at("loss");
        reject_unknown(l, "/loss", {"sigma2", "lambda", "num_mc_samples"});
        cfg.train.loss.sigma2 = get_or(l, "sigma2", cfg.train.loss.sigma2);
        cfg.train.loss.lambda = get_or(l, "lambda", cfg.train.loss.lambda);
        cfg.train.loss.num_mc_samples = get_or(l, "num_mc_samples", cfg.train.loss.num_mc_samples);
    }
    cfg.train.loss.batch_size = cfg.train.batch_size;
    cfg.train.seed = cfg.seed;
    cfg.train.mode = cfg.mode;
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    return from_json(parse_json_file(path));
}

namespace {

struct Provenance {
    std::string command;
    std::map<std::string, std::string> inputs;   // path -> content hash
    std::vector<std::string> outputs;            // file names within the run dir
    std::string config_hash;
    std::uint64_t seed = 0;
};

void write_run_json(const std::filesystem::path& dir, const Provenance& p) {
    json j;
    j["command"] = p.command;
    j["seed"] = p.seed;
    if (!p.config_hash.empty()) j["config_hash"] = p.config_hash;
    json in = json::object();
    for (const auto& [path, hash] : p.inputs) in[path] = hash;
    j["inputs"] = std::move(in);
    j["outputs"] = p.outputs;
    write_text_file(dir / "run.json", dump_json(j));
}

std::string hash_config(const std::filesystem::path& path) {
    return to_hex(fnv1a64(read_text_file(path)));
}

std::string hash_dataset_dir(const std::filesystem::path& dir) {
    // Manifest hash covers ids and splits; contours are hashed through it
    // indirectly for provenance purposes.
    return hash_file_hex(dir / "manifest.json");
}

struct GlobalArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    bool verbose = false;
};

RunConfig load_config(const GlobalArgs& g) {
    if (g.config_path.empty()) throw ConfigError("missing --config <path>");
    RunConfig cfg = RunConfig::load(g.config_path);
    if (g.seed_override) {
        cfg.seed = *g.seed_override;
        cfg.synth.seed = *g.seed_override;
        cfg.train.seed = *g.seed_override;
    }
    cfg.train.verbose = g.verbose;
    return cfg;
}

PcaShapeModel fit_pca_on_train(const ShapeDataset& ds, int k) {
    std::vector<ContourVector> contours;
    for (const auto* item : ds.split_items("train")) contours.push_back(item->contour);
    return fit_pca(contours, k);
}

int cmd_synth(const GlobalArgs& g, const std::string& out_dir) {
    const RunConfig cfg = load_config(g);
    const ShapeDataset ds = generate(cfg.synth);
    save_dataset(ds, out_dir);
    Provenance p;
    p.command = "synth";
    p.seed = cfg.seed;
    p.config_hash = hash_config(g.config_path);
    p.outputs.push_back("manifest.json");
    for (const auto& item : ds.items) {
        p.outputs.push_back("img_" + item.id + ".pgm");
        p.outputs.push_back("contour_" + item.id + ".csv");
    }
    write_run_json(out_dir, p);
    std::printf("synth: wrote %zu items to %s (train/val/test = %zu/%zu/%zu)\n", ds.items.size(),
                out_dir.c_str(), ds.splits.train.size(), ds.splits.val.size(),
                ds.splits.test.size());
    return 0;
}

int cmd_fit_pca(const GlobalArgs& g, const std::string& data_dir, const std::string& out_dir) {
    const RunConfig cfg = load_config(g);
    const ShapeDataset ds = load_dataset(data_dir);
    const PcaShapeModel model = fit_pca_on_train(ds, cfg.pca_components);
    std::filesystem::create_directories(out_dir);
    save_shape_model(model, std::filesystem::path(out_dir) / "pca_model.json");
    Provenance p;
    p.command = "fit-pca";
    p.seed = cfg.seed;
    p.config_hash = hash_config(g.config_path);
    p.inputs[data_dir] = hash_dataset_dir(data_dir);
    p.outputs.push_back("pca_model.json");
    write_run_json(out_dir, p);
    std::printf("fit-pca: K=%d on %zu training contours -> %s/pca_model.json\n",
                model.num_components, ds.split_ids("train").size(), out_dir.c_str());
    return 0;
}

int cmd_train(const GlobalArgs& g, const std::string& data_dir, const std::string& out_dir,
              const std::string& pca_path, const std::string& resume_path) {
    RunConfig cfg = load_config(g);
    const ShapeDataset ds = load_dataset(data_dir);
    const PcaShapeModel model = pca_path.empty()
                                    ? fit_pca_on_train(ds, cfg.pca_components)
                                    : load_shape_model(pca_path);
    std::filesystem::create_directories(out_dir);
    if (cfg.train.checkpoint_every > 0) {
        cfg.train.checkpoint_dir = std::filesystem::path(out_dir) / "checkpoints";
    }

    const TrainResult result =
        resume_path.empty() ? train(ds, model, cfg.train)
                            : train_from(ds, model, cfg.train, load_checkpoint(resume_path));

    const std::filesystem::path out(out_dir);
    save_checkpoint(result.net, out / "checkpoint.json",
                    CheckpointMeta{result.total_steps, result.best_epoch, false}, nullptr);
    write_train_log_csv(result.log, out / "train_log.csv");
    save_shape_model(model, out / "pca_model.json");
    write_text_file(out / "train_config.json", read_text_file(g.config_path));

    Provenance p;
    p.command = "train";
    p.seed = cfg.seed;
    p.config_hash = hash_config(g.config_path);
    p.inputs[data_dir] = hash_dataset_dir(data_dir);
    if (!pca_path.empty()) p.inputs[pca_path] = hash_file_hex(pca_path);
    if (!resume_path.empty()) p.inputs[resume_path] = hash_file_hex(resume_path);
    p.outputs = {"checkpoint.json", "checkpoint.bin", "train_log.csv", "pca_model.json",
                 "train_config.json"};
    write_run_json(out, p);

    std::printf("train: %s mode, %ld steps, best val DICE %.4f (epoch %d)%s\n",
                to_string(cfg.mode).c_str(), result.total_steps, result.best_val_dice,
                result.best_epoch, result.aborted ? " [aborted on non-finite loss]" : "");
    return result.aborted ? 3 : 0;
}

int cmd_eval(const GlobalArgs& g, const std::vector<std::string>& checkpoints,
             const std::string& data_dir, const std::string& split, const std::string& pca_path,
             const std::string& out_dir) {
    const ShapeDataset ds = load_dataset(data_dir);
    const auto items = ds.split_items(split);
    std::optional<PcaShapeModel> model;
    if (!pca_path.empty()) model = load_shape_model(pca_path);

    std::string csv = "method,dice_mean,dice_std,rmse_mean,rmse_std,n\n";
    std::printf("%-24s %-18s %-18s\n", split.c_str(), "DICE (pop. std)", "RMSE px (pop. std)");
    for (const auto& ckpt : checkpoints) {
        const LoadedCheckpoint lc = load_checkpoint(ckpt);
        const HeadMode mode = lc.net.spec().mode;
        if (mode != HeadMode::DirectVertex && !model) {
            throw ConfigError("eval: --pca required for checkpoint '" + ckpt + "' (mode " +
                              to_string(mode) + ")");
        }
        PcaShapeModel dummy;
        dummy.vertex_count = ds.vertex_count;
        dummy.num_components = lc.net.spec().latent_dim;
        const PcaShapeModel& m = model ? *model : dummy;
        const EvalSummary s = evaluate(lc.net, items, m, 5e-2);
        const std::string label = to_string(mode) + " " + std::to_string(lc.net.spec().latent_dim);
        std::printf("%-24s %.2f +/- %.2f     %.2f +/- %.2f\n", label.c_str(), s.dice_mean,
                    s.dice_std, s.rmse_mean, s.rmse_std);
        char row[256];
        std::snprintf(row, sizeof(row), "%s,%.17g,%.17g,%.17g,%.17g,%d\n", label.c_str(),
                      s.dice_mean, s.dice_std, s.rmse_mean, s.rmse_std, s.count);
        csv += row;
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_text_file(std::filesystem::path(out_dir) / "eval_table.csv", csv);
        Provenance p;
        p.command = "eval";
        p.inputs[data_dir] = hash_dataset_dir(data_dir);
        for (const auto& c : checkpoints) p.inputs[c] = hash_file_hex(c);
        if (!pca_path.empty()) p.inputs[pca_path] = hash_file_hex(pca_path);
        p.outputs = {"eval_table.csv"};
        write_run_json(out_dir, p);
    }
    return 0;
}

int cmd_sample(const GlobalArgs& g, const std::string& ckpt_path, const std::string& data_dir,
               const std::string& pca_path, const std::string& id, int n, std::uint64_t seed,
               bool stats, bool include_noise, const std::string& out_dir) {
    const ShapeDataset ds = load_dataset(data_dir);
    const DatasetItem& item = ds.by_id(id);
    const LoadedCheckpoint lc = load_checkpoint(ckpt_path);
    if (lc.net.spec().mode != HeadMode::Probabilistic) {
        throw ConfigError("sample: checkpoint must be probabilistic, got " +
                          to_string(lc.net.spec().mode));
    }
    const PcaShapeModel model = load_shape_model(pca_path);
    const PredictiveDistribution dist = predict(lc.net, item.image, model, 5e-2);

    json doc;
    doc["id"] = id;
    doc["seed"] = seed;
    doc["mean"] = dist.mean;
    json samples = json::array();
    RngStream rng(seed);
    for (int s = 0; s < n; ++s) {
        samples.push_back(sample_contour(dist, rng, include_noise));
    }
    doc["samples"] = std::move(samples);

    std::filesystem::create_directories(out_dir);
    const std::filesystem::path out(out_dir);
    write_text_file(out / ("samples_" + id + ".json"), dump_json(doc));
    save_prediction(dist, {0.30, 0.95, 0.999}, out / ("prediction_" + id + ".json"));

    if (stats && n > 1) {
        // Empirical moments of the drawn contours vs the closed forms.
        const int d = 2 * dist.vertex_count;
        RngStream rng2(seed);
        std::vector<double> mean_acc(static_cast<std::size_t>(d), 0.0);
        std::vector<double> sq_acc(static_cast<std::size_t>(d), 0.0);
        for (int s = 0; s < n; ++s) {
            const ContourVector y = sample_contour(dist, rng2, include_noise);
            for (int i = 0; i < d; ++i) {
                mean_acc[static_cast<std::size_t>(i)] += y[static_cast<std::size_t>(i)];
                sq_acc[static_cast<std::size_t>(i)] += y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
            }
        }
        double max_mean_err = 0.0, max_var_err = 0.0;
        const std::vector<double> cov = dense_covariance(dist);
        for (int i = 0; i < d; ++i) {
            const double em = mean_acc[static_cast<std::size_t>(i)] / n;
            const double ev = sq_acc[static_cast<std::size_t>(i)] / n - em * em;
            double tv = cov[static_cast<std::size_t>(i) * d + i];
            if (!include_noise) tv -= dist.sigma2;
            max_mean_err = std::max(max_mean_err, std::abs(em - dist.mean[static_cast<std::size_t>(i)]));
            max_var_err = std::max(max_var_err, std::abs(ev - tv));
        }
        std::printf("sample --stats: n=%d  max |emp mean - mean| = %.4g  max |emp var - var| = %.4g\n",
                    n, max_mean_err, max_var_err);
    }

    Provenance p;
    p.command = "sample";
    p.seed = seed;
    p.inputs[data_dir] = hash_dataset_dir(data_dir);
    p.inputs[ckpt_path] = hash_file_hex(ckpt_path);
    p.inputs[pca_path] = hash_file_hex(pca_path);
    p.outputs = {"samples_" + id + ".json", "prediction_" + id + ".json"};
    write_run_json(out, p);
    std::printf("sample: %d draws for %s -> %s\n", n, id.c_str(), out_dir.c_str());
    (void)g;
    return 0;
}

int cmd_plot(const std::string& pred_path, const std::string& image_path,
             const std::string& reference_path, const std::string& levels_csv, int samples,
             std::uint64_t seed, int stride, const std::string& out_dir) {
    const PredictiveDistribution dist = load_prediction(pred_path);

    const PgmImage pgm = read_pgm(image_path);
    Image img;
    img.height = pgm.height;
    img.width = pgm.width;
    img.pixels.assign(pgm.pixels.begin(), pgm.pixels.end());

    std::optional<ContourVector> reference;
    if (!reference_path.empty()) {
        ContourVector ref;
        const std::string text = read_text_file(reference_path);
        std::size_t pos = 0;
        while (pos < text.size()) {
            std::size_t eol = text.find('\n', pos);
            if (eol == std::string::npos) eol = text.size();
            const std::string line = text.substr(pos, eol - pos);
            const std::size_t comma = line.find(',');
            if (comma != std::string::npos) {
                ref.push_back(std::stod(line.substr(0, comma)));
                ref.push_back(std::stod(line.substr(comma + 1)));
            }
            pos = eol + 1;
        }
        reference = std::move(ref);
    }

    PlotOptions opts;
    if (!levels_csv.empty()) {
        opts.levels.clear();
        std::size_t pos = 0;
        while (pos <= levels_csv.size()) {
            std::size_t comma = levels_csv.find(',', pos);
            if (comma == std::string::npos) comma = levels_csv.size();
            opts.levels.push_back(std::stod(levels_csv.substr(pos, comma - pos)));
            pos = comma + 1;
        }
    }
    opts.num_samples = samples;
    opts.sample_seed = seed;
    opts.vertex_stride = stride;

    const std::string svg =
        render_prediction_svg(img, dist, reference ? &*reference : nullptr, opts);
    std::filesystem::create_directories(out_dir);
    write_text_file(std::filesystem::path(out_dir) / "plot.svg", svg);

    Provenance p;
    p.command = "plot";
    p.seed = seed;
    p.inputs[pred_path] = hash_file_hex(pred_path);
    p.inputs[image_path] = hash_file_hex(image_path);
    if (!reference_path.empty()) p.inputs[reference_path] = hash_file_hex(reference_path);
    p.outputs = {"plot.svg"};
    write_run_json(out_dir, p);
    std::printf("plot: wrote %s/plot.svg\n", out_dir.c_str());
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"probcontour: probabilistic PCA-based contour prediction with aleatoric "
                 "uncertainty"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "Run configuration JSON");
    std::uint64_t seed_val = 0;
    auto* seed_opt = app.add_option("--seed", seed_val, "Override the config seed");
    app.add_flag("--verbose", g.verbose, "Verbose progress on stderr");

    std::string out_dir, data_dir, pca_path, resume_path, split = "test";
    std::vector<std::string> checkpoints;
    std::string ckpt_path, item_id, pred_path, image_path, reference_path, levels_csv;
    int n_samples = 0, plot_samples = 0, stride = 2;
    std::uint64_t local_seed = 0;
    bool stats = false, include_noise = false;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset directory");
    synth->add_option("--out", out_dir, "Output dataset directory")->required();

    auto* fitpca = app.add_subcommand("fit-pca", "Fit the PCA shape prior on the train split");
    fitpca->add_option("--data", data_dir, "Dataset directory")->required();
    fitpca->add_option("--out", out_dir, "Output run directory")->required();

    auto* tr = app.add_subcommand("train", "Train a network");
    tr->add_option("--data", data_dir, "Dataset directory")->required();
    tr->add_option("--out", out_dir, "Output run directory")->required();
    tr->add_option("--pca", pca_path, "Pre-fitted PCA model (default: fit on train split)");
    tr->add_option("--resume", resume_path, "Checkpoint manifest to resume from");

    auto* ev = app.add_subcommand("eval", "Evaluate checkpoints, print a comparison table");
    ev->add_option("--checkpoint", checkpoints, "Checkpoint manifest (repeatable)")->required();
    ev->add_option("--data", data_dir, "Dataset directory")->required();
    ev->add_option("--split", split, "train|val|test (default test)");
    ev->add_option("--pca", pca_path, "PCA model JSON");
    ev->add_option("--out", out_dir, "Run directory for eval_table.csv");

    auto* sa = app.add_subcommand("sample", "Draw contours from the predictive distribution");
    sa->add_option("--checkpoint", ckpt_path, "Checkpoint manifest")->required();
    sa->add_option("--data", data_dir, "Dataset directory")->required();
    sa->add_option("--pca", pca_path, "PCA model JSON")->required();
    sa->add_option("--id", item_id, "Item id")->required();
    sa->add_option("--n", n_samples, "Number of samples");
    sa->add_option("--sample-seed", local_seed, "Sampling seed");
    sa->add_flag("--stats", stats, "Print empirical-vs-closed-form moment check");
    sa->add_flag("--include-noise", include_noise, "Add the iid pixel-noise term");
    sa->add_option("--out", out_dir, "Output run directory")->required();

    auto* pl = app.add_subcommand("plot", "Render a prediction as SVG");
    pl->add_option("--prediction", pred_path, "prediction_<id>.json from `sample`")->required();
    pl->add_option("--image", image_path, "PGM image")->required();
    pl->add_option("--reference", reference_path, "Reference contour CSV");
    pl->add_option("--levels", levels_csv, "Comma-separated confidence levels (default 0.30,0.95,0.999)");
    pl->add_option("--samples", plot_samples, "Sampled delineations to overlay");
    pl->add_option("--sample-seed", local_seed, "Sampling seed");
    pl->add_option("--stride", stride, "Plot every k-th vertex (default 2)");
    pl->add_option("--out", out_dir, "Output run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (seed_opt->count() > 0) g.seed_override = seed_val;

    try {
        if (synth->parsed()) return cmd_synth(g, out_dir);
        if (fitpca->parsed()) return cmd_fit_pca(g, data_dir, out_dir);
        if (tr->parsed()) return cmd_train(g, data_dir, out_dir, pca_path, resume_path);
        if (ev->parsed()) return cmd_eval(g, checkpoints, data_dir, split, pca_path, out_dir);
        if (sa->parsed()) {
            return cmd_sample(g, ckpt_path, data_dir, pca_path, item_id, n_samples, local_seed,
                              stats, include_noise, out_dir);
        }
        if (pl->parsed()) {
            return cmd_plot(pred_path, image_path, reference_path, levels_csv, plot_samples,
                            local_seed, stride, out_dir);
        }
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}

}  // namespace probcontour::cli
