// Command-line front end for the diffusion noise feature toolkit.
//
// Subcommands: gen-data, train-predictor, extract, train-detector, eval,
// perturb-sweep, spectrum, embed, run. Common flags: --seed, --config,
// --out, --workers, --cache. The feature cache directory defaults to the
// DNF_CACHE_DIR environment variable.

#include <array>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dnf/analysis.hpp"
#include "dnf/config_json.hpp"
#include "dnf/detector.hpp"
#include "dnf/dnf.hpp"
#include "dnf/errors.hpp"
#include "dnf/harness.hpp"
#include "dnf/io.hpp"
#include "dnf/parallel.hpp"
#include "dnf/perturb.hpp"
#include "dnf/rng.hpp"
#include "dnf/trainable.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::string config;
    std::string out;
    int workers = 0;
    std::string cache;
};

void add_common_flags(CLI::App* cmd, Common& c) {
    cmd->add_option("--seed", c.seed, "Deterministic run seed");
    cmd->add_option("--config", c.config, "JSON configuration file");
    cmd->add_option("--out", c.out, "Output directory");
    cmd->add_option("--workers", c.workers, "Worker threads (0 = library default)");
    cmd->add_option("--cache", c.cache, "Feature cache directory");
}

json load_config(const Common& c, bool required) {
    if (c.config.empty()) {
        if (required) throw dnf::IoError("this command needs --config");
        return json::object();
    }
    std::ifstream in(c.config);
    if (!in) throw dnf::IoError("cannot open config file " + c.config);
    return json::parse(in);
}

fs::path require_out(const Common& c) {
    if (c.out.empty()) throw dnf::IoError("this command needs --out");
    fs::create_directories(c.out);
    return fs::path(c.out);
}

fs::path resolve_cache(const Common& c) {
    if (!c.cache.empty()) return fs::path(c.cache);
    if (const char* env = std::getenv("DNF_CACHE_DIR"); env && *env) return fs::path(env);
    throw dnf::IoError("no cache directory; pass --cache or set DNF_CACHE_DIR");
}

fs::path config_dir(const Common& c) {
    return c.config.empty() ? fs::current_path() : fs::path(c.config).parent_path();
}

// Everything extract-like commands need, parsed from one config document.
struct ExtractSetup {
    int resolution = 32;
    dnf::NoiseSchedule schedule;
    dnf::TimestepSequence taus;
    dnf::FusionStrategy strategy = dnf::FusionStrategy::kFirst;
    std::unique_ptr<dnf::NoisePredictor> predictor;

    dnf::ExtractConfig config() const {
        dnf::ExtractConfig xc;
        xc.working_resolution = resolution;
        xc.schedule = schedule;
        xc.taus = taus;
        xc.predictor = predictor.get();
        xc.strategy = strategy;
        return xc;
    }
};

ExtractSetup parse_extract_setup(const json& j, const fs::path& base_dir, std::uint64_t seed,
                                 std::vector<std::string> extra_allowed = {}) {
    std::vector<std::string> allowed{"resolution", "schedule", "taus", "strategy", "predictor"};
    allowed.insert(allowed.end(), extra_allowed.begin(), extra_allowed.end());
    dnf::check_config_keys(j, allowed, "top level");
    ExtractSetup s;
    if (j.contains("resolution")) s.resolution = j.at("resolution").get<int>();
    s.schedule = j.contains("schedule") ? dnf::schedule_from_json(j.at("schedule"))
                                        : dnf::make_default_schedule();
    s.taus = j.contains("taus")
                 ? dnf::taus_from_json(j.at("taus"), s.schedule.total_steps)
                 : dnf::sample_timesteps(s.schedule.total_steps, 8, dnf::TimestepMode::kUniform);
    if (j.contains("strategy"))
        s.strategy = dnf::fusion_strategy_from_string(j.at("strategy").get<std::string>());
    dnf::PredictorSpec spec;
    if (j.contains("predictor")) spec = dnf::predictor_spec_from_json(j.at("predictor"));
    s.predictor = dnf::make_predictor(spec, s.schedule, nullptr, base_dir, seed);
    return s;
}

std::vector<dnf::PerturbationSpec> perturb_specs_from_json(const json& j) {
    dnf::check_config_keys(j, {"enabled", "blur_sigmas", "jpeg_qualities"}, "perturb");
    std::vector<double> sigmas{0.0, 1.0, 2.0, 3.0};
    std::vector<int> qualities{100, 65, 30};
    if (j.contains("blur_sigmas")) sigmas = j.at("blur_sigmas").get<std::vector<double>>();
    if (j.contains("jpeg_qualities")) qualities = j.at("jpeg_qualities").get<std::vector<int>>();
    std::vector<dnf::PerturbationSpec> specs;
    for (double s : sigmas) specs.push_back({dnf::PerturbationSpec::Kind::kBlur, s});
    for (int q : qualities)
        specs.push_back({dnf::PerturbationSpec::Kind::kJpeg, static_cast<double>(q)});
    return specs;
}

// ---- subcommand handlers -------------------------------------------------

int cmd_gen_data(const Common& c) {
    const json cfg = load_config(c, false);
    dnf::check_config_keys(
        cfg, {"resolution", "n_real", "n_generated", "texture", "schedule", "taus", "predictor"},
        "top level");
    const fs::path root = require_out(c);

    int resolution = 32;
    std::size_t n_real = 0, n_generated = 0;
    if (cfg.contains("resolution")) resolution = cfg.at("resolution").get<int>();
    if (cfg.contains("n_real")) n_real = cfg.at("n_real").get<std::size_t>();
    if (cfg.contains("n_generated")) n_generated = cfg.at("n_generated").get<std::size_t>();
    if (n_real == 0 && n_generated == 0)
        throw dnf::IoError("config requests no images (n_real and n_generated are both 0)");

    std::vector<dnf::ManifestRow> rows;
    if (n_real > 0) {
        dnf::TextureParams tp;
        tp.resolution = resolution;
        if (cfg.contains("texture"))
            tp = dnf::texture_params_from_json(cfg.at("texture"), resolution);
        rows = dnf::gen_real_dataset(root, n_real, dnf::derive_seed(c.seed, 0), tp);
    }
    if (n_generated > 0) {
        if (!cfg.contains("predictor"))
            throw dnf::IoError("generating images needs a \"predictor\" config section");
        const dnf::NoiseSchedule schedule = cfg.contains("schedule")
                                                ? dnf::schedule_from_json(cfg.at("schedule"))
                                                : dnf::make_default_schedule();
        const dnf::TimestepSequence taus =
            cfg.contains("taus")
                ? dnf::taus_from_json(cfg.at("taus"), schedule.total_steps)
                : dnf::sample_timesteps(schedule.total_steps, 24, dnf::TimestepMode::kUniform);
        const auto predictor =
            dnf::make_predictor(dnf::predictor_spec_from_json(cfg.at("predictor")), schedule,
                                nullptr, config_dir(c), dnf::derive_seed(c.seed, 2));
        const auto fake = dnf::gen_fake_dataset(root, n_generated, dnf::derive_seed(c.seed, 1),
                                                *predictor, schedule, taus, resolution);
        rows.insert(rows.end(), fake.begin(), fake.end());
    }
    dnf::write_dataset_manifest(root, rows);
    std::cout << "wrote " << n_real << " real + " << n_generated << " generated images under "
              << root.string() << "\n";
    return 0;
}

int cmd_train_predictor(const Common& c, const std::string& data) {
    const json cfg = load_config(c, true);
    dnf::check_config_keys(cfg, {"schedule", "predictor"}, "top level");
    if (data.empty()) throw dnf::IoError("train-predictor needs --data");
    const fs::path out = require_out(c);

    const dnf::NoiseSchedule schedule = cfg.contains("schedule")
                                            ? dnf::schedule_from_json(cfg.at("schedule"))
                                            : dnf::make_default_schedule();
    dnf::PredictorSpec spec;
    if (cfg.contains("predictor")) spec = dnf::predictor_spec_from_json(cfg.at("predictor"));
    if (spec.kind != "trainable")
        throw dnf::IoError("train-predictor needs predictor kind \"trainable\"");

    const fs::path root(data);
    const auto rows = dnf::read_dataset_manifest(root);
    std::vector<fs::path> real_paths;
    for (const auto& row : rows)
        if (row.label == 0) real_paths.push_back(root / row.filename);
    if (real_paths.empty()) throw dnf::IoError("dataset has no real images to train on");
    std::vector<dnf::Tensor> images(real_paths.size());
    dnf::parallel::parallel_for(real_paths.size(), [&](std::size_t i) {
        images[i] = dnf::to_unit_range(dnf::to_gray(dnf::read_png(real_paths[i])));
    });

    const auto predictor = dnf::make_predictor(spec, schedule, &images, config_dir(c), c.seed);
    const auto* trained = dynamic_cast<const dnf::TrainablePredictor*>(predictor.get());
    trained->save(out);
    std::cout << "trained predictor on " << images.size() << " images, " << spec.train_steps
              << " steps, final loss " << trained->final_loss() << "; saved to " << out.string()
              << "\n";
    return 0;
}

int cmd_extract(const Common& c, const std::string& data) {
    const json cfg = load_config(c, true);
    if (data.empty()) throw dnf::IoError("extract needs --data");
    const fs::path out = require_out(c);
    const fs::path cache = resolve_cache(c);

    const ExtractSetup setup = parse_extract_setup(cfg, config_dir(c), c.seed);
    const fs::path root(data);
    const auto rows = dnf::read_dataset_manifest(root);
    std::vector<fs::path> paths;
    for (const auto& row : rows) paths.push_back(root / row.filename);

    const dnf::BatchResult batch = dnf::extract_batch(paths, setup.config(), cache);
    std::string tsv;
    for (std::size_t i = 0; i < batch.items.size(); ++i) {
        const auto& item = batch.items[i];
        if (!item.ok) {
            std::cerr << "extract failed: " << item.source.string() << ": " << item.error << "\n";
            continue;
        }
        std::error_code ec;
        fs::path rel = fs::relative(dnf::feature_path(cache, item.key), out, ec);
        if (ec || rel.empty()) rel = fs::absolute(dnf::feature_path(cache, item.key));
        tsv += rel.string();
        tsv += '\t';
        tsv += std::to_string(rows[i].label);
        tsv += '\n';
    }
    dnf::write_text_atomic(out / "features.tsv", tsv);
    std::cout << "extracted " << (batch.items.size() - batch.failures) << "/" << batch.items.size()
              << " features into " << cache.string() << "\n";
    return batch.failures == 0 ? 0 : 1;
}

int cmd_train_detector(const Common& c, const std::string& train_tsv, const std::string& val_tsv) {
    const json cfg = load_config(c, false);
    if (train_tsv.empty() || val_tsv.empty())
        throw dnf::IoError("train-detector needs --train and --val feature lists");
    const fs::path out = require_out(c);

    dnf::DetectorTrainConfig dc;
    if (!cfg.empty()) dc = dnf::detector_train_config_from_json(cfg);
    dc.seed = c.seed;

    const dnf::FeatureSet train = dnf::read_features_manifest(train_tsv);
    const dnf::FeatureSet val = dnf::read_features_manifest(val_tsv);
    const dnf::DetectorModel model =
        dnf::train_detector(train.features, train.labels, val.features, val.labels, dc);
    dnf::save_detector(model, out);
    std::cout << "trained " << dnf::to_string(model.arch) << " detector: " << model.epochs
              << " epochs, final lr " << model.final_lr << "; saved to " << out.string() << "\n";
    return 0;
}

int cmd_eval(const Common& c, const std::string& features_tsv, const std::string& model_dir) {
    if (features_tsv.empty() || model_dir.empty())
        throw dnf::IoError("eval needs --features and --model");
    const fs::path out = require_out(c);

    const dnf::FeatureSet set = dnf::read_features_manifest(features_tsv);
    const dnf::DetectorModel model = dnf::load_detector(model_dir);
    const dnf::EvalReport report = dnf::evaluate(model, set.features, set.labels);
    dnf::write_text_atomic(out / "report.json", dnf::eval_report_to_json(report));
    std::cout << "accuracy " << report.accuracy << ", average precision "
              << report.average_precision << " (" << report.count_real << " real, "
              << report.count_generated << " generated)\n";
    return 0;
}

int cmd_perturb_sweep(const Common& c, const std::string& data, const std::string& model_dir) {
    const json cfg = load_config(c, true);
    if (data.empty() || model_dir.empty())
        throw dnf::IoError("perturb-sweep needs --data and --model");
    const fs::path out = require_out(c);

    const ExtractSetup setup = parse_extract_setup(cfg, config_dir(c), c.seed, {"perturb"});
    const auto specs = perturb_specs_from_json(cfg.contains("perturb") ? cfg.at("perturb")
                                                                       : json::object());

    const fs::path root(data);
    const auto rows = dnf::read_dataset_manifest(root);
    std::vector<dnf::ImageU8> images(rows.size());
    std::vector<int> labels(rows.size());
    dnf::parallel::parallel_for(rows.size(), [&](std::size_t i) {
        images[i] = dnf::read_png(root / rows[i].filename);
        labels[i] = rows[i].label;
    });

    const dnf::DetectorModel model = dnf::load_detector(model_dir);
    const auto sweep = dnf::perturbation_sweep(images, labels, model, setup.config(), specs);
    dnf::write_text_atomic(out / "perturb.json", dnf::sweep_to_json(sweep));
    for (const auto& row : sweep)
        std::cout << dnf::spec_label(row.spec) << ": accuracy " << row.report.accuracy << ", ap "
                  << row.report.average_precision << "\n";
    return 0;
}

int cmd_spectrum(const Common& c, const std::string& features_tsv) {
    if (features_tsv.empty()) throw dnf::IoError("spectrum needs --features");
    const fs::path out = require_out(c);

    const dnf::FeatureSet set = dnf::read_features_manifest(features_tsv);
    std::vector<dnf::Tensor> real, generated;
    for (std::size_t i = 0; i < set.features.size(); ++i)
        (set.labels[i] == 0 ? real : generated).push_back(set.features[i]);
    if (real.size() < 2 || generated.size() < 2)
        throw dnf::MetricError("spectrum needs at least 2 features per class");

    const auto emit = [&](const std::vector<dnf::Tensor>& feats, const std::string& name) {
        const dnf::SpectrumMap map = dnf::mean_log_spectrum(feats);
        dnf::save_tensor(out / ("spectrum_" + name + ".dnft"), map.mean_log);
        dnf::write_png(out / ("spectrum_" + name + ".png"), dnf::render_map_png(map.mean_log));
        std::vector<double> flatness(feats.size());
        dnf::parallel::parallel_for(feats.size(), [&](std::size_t i) {
            flatness[i] = dnf::spectral_flatness(feats[i]);
        });
        double mean = 0.0;
        for (double f : flatness) mean += f;
        return mean / static_cast<double>(feats.size());
    };
    const double flat_real = emit(real, "real");
    const double flat_gen = emit(generated, "generated");
    const json summary{{"count_real", real.size()},
                       {"count_generated", generated.size()},
                       {"mean_flatness_real", flat_real},
                       {"mean_flatness_generated", flat_gen}};
    dnf::write_text_atomic(out / "spectrum.json", summary.dump(2) + "\n");
    std::cout << "mean spectral flatness: real " << flat_real << ", generated " << flat_gen
              << "\n";
    return 0;
}

int cmd_embed(const Common& c, const std::string& features_tsv, int components) {
    if (features_tsv.empty()) throw dnf::IoError("embed needs --features");
    const fs::path out = require_out(c);

    const dnf::FeatureSet set = dnf::read_features_manifest(features_tsv);
    const dnf::PcaResult pca = dnf::pca_embed(set.features, components);
    dnf::save_tensor(out / "embed.dnft", pca.coords);
    const json summary{{"labels", set.labels},
                       {"eigenvalues", pca.eigenvalues},
                       {"components", components}};
    dnf::write_text_atomic(out / "embed.json", summary.dump(2) + "\n");
    std::cout << "embedded " << set.features.size() << " features into " << components
              << " components\n";
    return 0;
}

int cmd_run(const Common& c) {
    if (c.config.empty()) throw dnf::IoError("run needs --config");
    dnf::RunOverrides overrides;
    if (c.seed != 0) overrides.seed = c.seed;
    if (!c.out.empty()) overrides.out_dir = fs::path(c.out);
    if (!c.cache.empty()) overrides.cache_dir = fs::path(c.cache);
    const dnf::ExperimentResult result = dnf::run_experiment(c.config, overrides);
    for (const auto& [name, report] : result.reports)
        std::cout << name << ": accuracy " << report.accuracy << ", ap "
                  << report.average_precision << "\n";
    std::cout << "outputs under " << result.out_dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diffusion noise feature extraction and detection toolkit"};
    app.require_subcommand(1);

    Common common[9];
    std::string data, train_tsv, val_tsv, features_tsv, model_dir;
    int components = 2;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    add_common_flags(gen, common[0]);

    auto* trainp = app.add_subcommand("train-predictor", "Train the denoiser on a dataset");
    add_common_flags(trainp, common[1]);
    trainp->add_option("--data", data, "Dataset root (real images are used)");

    auto* extract = app.add_subcommand("extract", "Extract features for a dataset");
    add_common_flags(extract, common[2]);
    extract->add_option("--data", data, "Dataset root");

    auto* traind = app.add_subcommand("train-detector", "Train a detector on feature lists");
    add_common_flags(traind, common[3]);
    traind->add_option("--train", train_tsv, "Training features.tsv");
    traind->add_option("--val", val_tsv, "Validation features.tsv");

    auto* eval = app.add_subcommand("eval", "Evaluate a detector on a feature list");
    add_common_flags(eval, common[4]);
    eval->add_option("--features", features_tsv, "features.tsv to score");
    eval->add_option("--model", model_dir, "Detector model directory");

    auto* sweep = app.add_subcommand("perturb-sweep", "Robustness grid over blur and JPEG");
    add_common_flags(sweep, common[5]);
    sweep->add_option("--data", data, "Dataset root");
    sweep->add_option("--model", model_dir, "Detector model directory");

    auto* spectrum = app.add_subcommand("spectrum", "Per-class mean log spectra of features");
    add_common_flags(spectrum, common[6]);
    spectrum->add_option("--features", features_tsv, "features.tsv to analyze");

    auto* embed = app.add_subcommand("embed", "PCA embedding of features");
    add_common_flags(embed, common[7]);
    embed->add_option("--features", features_tsv, "features.tsv to embed");
    embed->add_option("--components", components, "Number of principal components");

    auto* run = app.add_subcommand("run", "Run a configured experiment end to end");
    add_common_flags(run, common[8]);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const CLI::App* sub = app.get_subcommands().front();
        const std::array<std::pair<CLI::App*, Common*>, 9> table{{
            {gen, &common[0]},
            {trainp, &common[1]},
            {extract, &common[2]},
            {traind, &common[3]},
            {eval, &common[4]},
            {sweep, &common[5]},
            {spectrum, &common[6]},
            {embed, &common[7]},
            {run, &common[8]},
        }};
        const Common* c = &common[0];
        for (const auto& [cmd, cm] : table)
            if (cmd == sub) c = cm;
        dnf::parallel::set_workers(c->workers);

        if (sub == gen) return cmd_gen_data(*c);
        if (sub == trainp) return cmd_train_predictor(*c, data);
        if (sub == extract) return cmd_extract(*c, data);
        if (sub == traind) return cmd_train_detector(*c, train_tsv, val_tsv);
        if (sub == eval) return cmd_eval(*c, features_tsv, model_dir);
        if (sub == sweep) return cmd_perturb_sweep(*c, data, model_dir);
        if (sub == spectrum) return cmd_spectrum(*c, features_tsv);
        if (sub == embed) return cmd_embed(*c, features_tsv, components);
        if (sub == run) return cmd_run(*c);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "dnfcli: " << e.what() << "\n";
        return 1;
    }
}
