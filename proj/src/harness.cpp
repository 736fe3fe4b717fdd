#include "dnf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "dnf/analysis.hpp"
#include "dnf/config_json.hpp"
#include "dnf/errors.hpp"
#include "dnf/io.hpp"
#include "dnf/parallel.hpp"
#include "dnf/rng.hpp"
#include "dnf/trainable.hpp"

namespace dnf {

namespace fs = std::filesystem;
using nlohmann::json;

void write_dataset_manifest(const fs::path& root, const std::vector<ManifestRow>& rows) {
    std::string text;
    for (const auto& row : rows) {
        text += row.filename;
        text += '\t';
        text += std::to_string(row.label);
        text += '\t';
        text += row.source;
        text += '\n';
    }
    write_text_atomic(root / "manifest.tsv", text);
}

std::vector<ManifestRow> read_dataset_manifest(const fs::path& root) {
    std::ifstream in(root / "manifest.tsv");
    if (!in) throw IoError("cannot open manifest.tsv under " + root.string());
    std::vector<ManifestRow> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos)
            throw IoError("manifest.tsv line " + std::to_string(lineno) + ": expected 3 fields");
        ManifestRow row;
        row.filename = line.substr(0, tab1);
        const std::string label = line.substr(tab1 + 1, tab2 - tab1 - 1);
        row.source = line.substr(tab2 + 1);
        if (label == "0") row.label = 0;
        else if (label == "1") row.label = 1;
        else throw IoError("manifest.tsv line " + std::to_string(lineno) + ": label must be 0 or 1");
        rows.push_back(std::move(row));
    }
    parallel::parallel_for(rows.size(), [&](std::size_t i) {
        read_png(root / rows[i].filename);  // throws if missing or undecodable
    });
    return rows;
}

std::vector<ManifestRow> gen_real_dataset(const fs::path& root, std::size_t n, std::uint64_t seed,
                                          const TextureParams& params) {
    if (n < 1) throw std::invalid_argument("dataset size must be >= 1");
    if (params.resolution < 4) throw std::invalid_argument("resolution too small");
    if (params.min_corr < 0.0 || params.max_corr < params.min_corr)
        throw std::invalid_argument("bad correlation-length range");
    fs::create_directories(root / "real");
    const auto r = static_cast<std::size_t>(params.resolution);

    std::vector<ManifestRow> rows(n);
    parallel::parallel_for(n, [&](std::size_t i) {
        Rng rng(derive_seed(seed, i));
        const double corr = rng.uniform(params.min_corr, params.max_corr);
        Tensor field = rng.normal_tensor({r, r});
        if (corr > 0.0) field = blur_f64(field, corr);

        double mean = 0.0;
        for (std::size_t j = 0; j < field.size(); ++j) mean += field.data()[j];
        mean /= static_cast<double>(field.size());
        double var = 0.0;
        for (std::size_t j = 0; j < field.size(); ++j) {
            const double d = field.data()[j] - mean;
            var += d * d;
        }
        const double sd = std::max(std::sqrt(var / static_cast<double>(field.size())), 1e-12);
        const double amp = params.field_amp * rng.uniform(0.6, 1.0);
        for (std::size_t j = 0; j < field.size(); ++j)
            field.data()[j] = (field.data()[j] - mean) / sd * amp;

        if (params.max_edges > 0 && rng.uniform() < params.edge_prob) {
            const auto edges = 1 + rng.below(static_cast<std::size_t>(params.max_edges));
            for (std::size_t e = 0; e < edges; ++e) {
                const double theta = rng.uniform(0.0, std::acos(-1.0));
                const double nx = std::cos(theta), ny = std::sin(theta);
                // Threshold drawn inside the projection range so the edge crosses the image.
                double pmin = 0.0, pmax = 0.0;
                const double rr = static_cast<double>(params.resolution - 1);
                for (const double cy : {0.0, rr})
                    for (const double cx : {0.0, rr}) {
                        const double p = nx * cx + ny * cy;
                        pmin = std::min(pmin, p);
                        pmax = std::max(pmax, p);
                    }
                const double span = pmax - pmin;
                const double c = rng.uniform(pmin + 0.15 * span, pmax - 0.15 * span);
                const double amp_e =
                    params.edge_amp * rng.uniform(0.5, 1.0) * (rng.below(2) == 0 ? 1.0 : -1.0);
                for (std::size_t y = 0; y < r; ++y)
                    for (std::size_t x = 0; x < r; ++x)
                        if (nx * static_cast<double>(x) + ny * static_cast<double>(y) >= c)
                            field.data()[y * r + x] += amp_e;
            }
        }

        ImageU8 img;
        img.height = img.width = params.resolution;
        img.channels = 1;
        img.pixels.resize(r * r);
        for (std::size_t j = 0; j < r * r; ++j) {
            const double v = std::nearbyint(128.0 + field.data()[j]);
            img.pixels[j] = static_cast<std::uint8_t>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
        }

        char name[48];
        std::snprintf(name, sizeof name, "real/real_%05zu.png", i);
        write_png(root / name, img);
        rows[i] = ManifestRow{name, 0, "texture"};
    });
    return rows;
}

Tensor generate_sample(std::uint64_t seed, std::size_t index, const NoisePredictor& predictor,
                       const NoiseSchedule& schedule, const TimestepSequence& taus,
                       int resolution) {
    Rng rng(derive_seed(seed, index));
    const auto r = static_cast<std::size_t>(resolution);
    const Tensor xt = rng.normal_tensor({r, r});
    return generate(xt, taus, predictor, schedule);
}

std::vector<ManifestRow> gen_fake_dataset(const fs::path& root, std::size_t n, std::uint64_t seed,
                                          const NoisePredictor& predictor,
                                          const NoiseSchedule& schedule,
                                          const TimestepSequence& taus, int resolution) {
    if (n < 1) throw std::invalid_argument("dataset size must be >= 1");
    fs::create_directories(root / "generated");
    std::vector<ManifestRow> rows(n);
    parallel::parallel_for(n, [&](std::size_t i) {
        const Tensor sample = generate_sample(seed, i, predictor, schedule, taus, resolution);
        const ImageU8 img = from_unit_range(sample);
        char name[48];
        std::snprintf(name, sizeof name, "generated/gen_%05zu.png", i);
        write_png(root / name, img);
        rows[i] = ManifestRow{name, 1, "ddim"};
    });
    return rows;
}

// ---- Experiment configuration -------------------------------------------

namespace {

struct DataCfg {
    std::size_t train_per_class = 2000;
    std::size_t val_per_class = 200;  // carved out of train_per_class
    std::size_t test_per_class = 500;
    TextureParams texture;
    int gen_steps = 24;
};

struct PerturbCfg {
    bool enabled = true;
    std::vector<double> blur_sigmas{0.0, 1.0, 2.0, 3.0};
    std::vector<int> jpeg_qualities{100, 65, 30};
};

struct BenchmarkConfig {
    std::uint64_t seed = 7;
    int resolution = 32;
    std::string out_dir;
    std::string cache_dir;
    NoiseSchedule schedule;
    TimestepSequence taus;  // extraction sequence
    DataCfg data;
    PredictorSpec predictor;
    std::vector<std::string> strategies{"first", "avg", "last"};
    DetectorTrainConfig detector;
    bool raw_baseline = true;
    PerturbCfg perturb;
    bool spectrum = true;
    int embed_components = 2;
};

DataCfg parse_data(const json& j, int resolution) {
    check_config_keys(j,
                      {"train_per_class", "val_per_class", "test_per_class", "texture", "gen_steps"},
                      "data");
    DataCfg c;
    c.texture.resolution = resolution;
    if (j.contains("train_per_class")) c.train_per_class = j.at("train_per_class").get<std::size_t>();
    if (j.contains("val_per_class")) c.val_per_class = j.at("val_per_class").get<std::size_t>();
    if (j.contains("test_per_class")) c.test_per_class = j.at("test_per_class").get<std::size_t>();
    if (j.contains("texture")) c.texture = texture_params_from_json(j.at("texture"), resolution);
    if (j.contains("gen_steps")) c.gen_steps = j.at("gen_steps").get<int>();
    return c;
}

PerturbCfg parse_perturb(const json& j) {
    check_config_keys(j, {"enabled", "blur_sigmas", "jpeg_qualities"}, "perturb");
    PerturbCfg c;
    if (j.contains("enabled")) c.enabled = j.at("enabled").get<bool>();
    if (j.contains("blur_sigmas")) c.blur_sigmas = j.at("blur_sigmas").get<std::vector<double>>();
    if (j.contains("jpeg_qualities"))
        c.jpeg_qualities = j.at("jpeg_qualities").get<std::vector<int>>();
    return c;
}

BenchmarkConfig parse_benchmark(const json& j) {
    check_config_keys(j,
                      {"mode", "seed", "resolution", "out_dir", "cache_dir", "schedule", "taus",
                       "data", "predictor", "strategies", "detector", "raw_baseline", "perturb",
                       "spectrum", "embed_components"},
                      "top level");
    BenchmarkConfig c;
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("resolution")) c.resolution = j.at("resolution").get<int>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("cache_dir")) c.cache_dir = j.at("cache_dir").get<std::string>();
    c.schedule = j.contains("schedule") ? schedule_from_json(j.at("schedule"))
                                        : make_default_schedule();
    c.taus = j.contains("taus")
                 ? taus_from_json(j.at("taus"), c.schedule.total_steps)
                 : sample_timesteps(c.schedule.total_steps, 8, TimestepMode::kUniform);
    if (j.contains("data")) c.data = parse_data(j.at("data"), c.resolution);
    c.data.texture.resolution = c.resolution;
    if (j.contains("predictor")) c.predictor = predictor_spec_from_json(j.at("predictor"));
    if (j.contains("strategies")) c.strategies = j.at("strategies").get<std::vector<std::string>>();
    if (j.contains("detector")) c.detector = detector_train_config_from_json(j.at("detector"));
    if (j.contains("raw_baseline")) c.raw_baseline = j.at("raw_baseline").get<bool>();
    if (j.contains("perturb")) c.perturb = parse_perturb(j.at("perturb"));
    if (j.contains("spectrum")) c.spectrum = j.at("spectrum").get<bool>();
    if (j.contains("embed_components")) c.embed_components = j.at("embed_components").get<int>();
    if (c.strategies.empty()) throw IoError("config lists no fusion strategies");
    if (c.data.val_per_class < 1 || c.data.val_per_class >= c.data.train_per_class)
        throw IoError("val_per_class must be in [1, train_per_class)");
    return c;
}

struct LoadedSplit {
    std::vector<fs::path> paths;
    std::vector<int> labels;
};

LoadedSplit split_from_rows(const fs::path& root, const std::vector<ManifestRow>& rows) {
    LoadedSplit s;
    s.paths.reserve(rows.size());
    s.labels.reserve(rows.size());
    for (const auto& row : rows) {
        s.paths.push_back(root / row.filename);
        s.labels.push_back(row.label);
    }
    return s;
}

std::vector<Tensor> load_raw_features(const std::vector<fs::path>& paths, int resolution) {
    const auto r = static_cast<std::size_t>(resolution);
    std::vector<Tensor> out(paths.size());
    parallel::parallel_for(paths.size(), [&](std::size_t i) {
        Tensor gray = to_gray(read_png(paths[i]));
        if (gray.rows() != r || gray.cols() != r) gray = resize_bilinear(gray, r, r);
        Tensor t = to_unit_range(gray);
        t.narrow_to_f32();
        out[i] = std::move(t);
    });
    return out;
}

std::vector<Tensor> features_from_batch(const BatchResult& batch, const fs::path& cache_dir) {
    std::vector<Tensor> out(batch.items.size());
    parallel::parallel_for(batch.items.size(), [&](std::size_t i) {
        out[i] = load_feature(cache_dir, batch.items[i].key);
    });
    return out;
}

}  // namespace

FeatureSet read_features_manifest(const fs::path& tsv_path) {
    std::ifstream in(tsv_path);
    if (!in) throw IoError("cannot open features manifest " + tsv_path.string());
    std::vector<fs::path> paths;
    FeatureSet set;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw IoError("features manifest line " + std::to_string(lineno) +
                          ": expected 2 fields");
        paths.push_back(tsv_path.parent_path() / line.substr(0, tab));
        const std::string label = line.substr(tab + 1);
        if (label == "0") set.labels.push_back(0);
        else if (label == "1") set.labels.push_back(1);
        else throw IoError("features manifest line " + std::to_string(lineno) +
                           ": label must be 0 or 1");
    }
    set.features.resize(paths.size());
    parallel::parallel_for(paths.size(), [&](std::size_t i) {
        set.features[i] = load_tensor(paths[i]);
    });
    return set;
}

ExperimentResult run_experiment(const fs::path& config_path, const RunOverrides& overrides) {
    std::ifstream cf(config_path);
    if (!cf) throw IoError("cannot open config file " + config_path.string());
    json raw = json::parse(cf);
    const fs::path config_dir = config_path.parent_path();

    std::string mode = "benchmark";
    if (raw.contains("mode")) mode = raw.at("mode").get<std::string>();

    // ---- eval-only mode --------------------------------------------------
    if (mode == "eval") {
        check_config_keys(raw, {"mode", "features_manifest", "model", "out_dir"}, "top level");
        fs::path out = overrides.out_dir.value_or(
            fs::path(raw.contains("out_dir") ? raw.at("out_dir").get<std::string>() : ""));
        if (out.empty()) throw IoError("eval mode needs an output directory");
        fs::create_directories(out);
        try {
            const fs::path manifest_path = config_dir / raw.at("features_manifest").get<std::string>();
            const fs::path model_dir = config_dir / raw.at("model").get<std::string>();
            const FeatureSet set = read_features_manifest(manifest_path);
            const DetectorModel model = load_detector(model_dir);
            const EvalReport report = evaluate(model, set.features, set.labels);
            write_text_atomic(out / "report.json", eval_report_to_json(report));
            ExperimentResult result;
            result.out_dir = out;
            result.reports["eval"] = report;
            return result;
        } catch (const std::exception& e) {
            write_text_atomic(out / "failure.json",
                              json{{"stage", "eval"}, {"error", e.what()}}.dump(2) + "\n");
            throw;
        }
    }

    if (mode != "benchmark") throw IoError("unknown config mode: " + mode);

    BenchmarkConfig cfg = parse_benchmark(raw);
    if (overrides.seed) cfg.seed = *overrides.seed;
    fs::path out = overrides.out_dir.value_or(fs::path(cfg.out_dir));
    if (out.empty()) throw IoError("benchmark mode needs an output directory");
    fs::path cache = overrides.cache_dir.value_or(fs::path(cfg.cache_dir));
    if (cache.empty()) cache = out / "cache";
    fs::create_directories(out);

    ExperimentResult result;
    result.out_dir = out;

    std::string stage = "setup";
    try {
        const NoiseSchedule& schedule = cfg.schedule;
        const TimestepSequence& taus_extract = cfg.taus;
        const TimestepSequence taus_gen =
            sample_timesteps(cfg.schedule.total_steps, cfg.data.gen_steps, cfg.taus.mode);

        // ---- real data ---------------------------------------------------
        stage = "gen-real";
        const std::size_t n_train = cfg.data.train_per_class - cfg.data.val_per_class;
        const fs::path train_root = out / "data" / "train";
        const fs::path val_root = out / "data" / "val";
        const fs::path test_root = out / "data" / "test";
        auto train_rows = gen_real_dataset(train_root, n_train, derive_seed(cfg.seed, 10), cfg.data.texture);
        auto val_rows = gen_real_dataset(val_root, cfg.data.val_per_class, derive_seed(cfg.seed, 11), cfg.data.texture);
        auto test_rows = gen_real_dataset(test_root, cfg.data.test_per_class, derive_seed(cfg.seed, 12), cfg.data.texture);

        // ---- predictor ---------------------------------------------------
        stage = "train-predictor";
        std::vector<Tensor> train_imgs;
        if (cfg.predictor.kind == "trainable") {
            train_imgs.resize(train_rows.size());
            parallel::parallel_for(train_rows.size(), [&](std::size_t i) {
                train_imgs[i] = to_unit_range(to_gray(read_png(train_root / train_rows[i].filename)));
            });
        }
        std::unique_ptr<NoisePredictor> predictor = make_predictor(
            cfg.predictor, schedule, &train_imgs, config_dir, derive_seed(cfg.seed, 20));
        if (auto* trained = dynamic_cast<TrainablePredictor*>(predictor.get()))
            trained->save(out / "predictor");
        train_imgs.clear();

        // ---- generated data ----------------------------------------------
        stage = "gen-fake";
        auto fake_train = gen_fake_dataset(train_root, n_train, derive_seed(cfg.seed, 13), *predictor,
                                           schedule, taus_gen, cfg.resolution);
        auto fake_val = gen_fake_dataset(val_root, cfg.data.val_per_class, derive_seed(cfg.seed, 14),
                                         *predictor, schedule, taus_gen, cfg.resolution);
        auto fake_test = gen_fake_dataset(test_root, cfg.data.test_per_class, derive_seed(cfg.seed, 15),
                                          *predictor, schedule, taus_gen, cfg.resolution);
        for (auto rowsets : {std::pair{&train_rows, &fake_train}, std::pair{&val_rows, &fake_val},
                             std::pair{&test_rows, &fake_test}}) {
            rowsets.first->insert(rowsets.first->end(), rowsets.second->begin(), rowsets.second->end());
        }
        write_dataset_manifest(train_root, train_rows);
        write_dataset_manifest(val_root, val_rows);
        write_dataset_manifest(test_root, test_rows);

        const LoadedSplit train_split = split_from_rows(train_root, train_rows);
        const LoadedSplit val_split = split_from_rows(val_root, val_rows);
        const LoadedSplit test_split = split_from_rows(test_root, test_rows);

        // ---- extraction and detectors ------------------------------------
        json summary = json::object();
        std::size_t strategy_index = 0;
        DetectorModel first_model;
        bool have_first = false;
        ExtractConfig first_cfg;
        for (const auto& strategy_name : cfg.strategies) {
            stage = "extract-" + strategy_name;
            ExtractConfig xc;
            xc.working_resolution = cfg.resolution;
            xc.schedule = schedule;
            xc.taus = taus_extract;
            xc.predictor = predictor.get();
            xc.strategy = fusion_strategy_from_string(strategy_name);

            auto run_split = [&](const LoadedSplit& split) {
                BatchResult batch = extract_batch(split.paths, xc, cache);
                if (batch.failures > 0) {
                    std::string first_error;
                    for (const auto& item : batch.items)
                        if (!item.ok) {
                            first_error = item.source.string() + ": " + item.error;
                            break;
                        }
                    throw IoError("extraction failed for " + std::to_string(batch.failures) +
                                  " items; first: " + first_error);
                }
                return features_from_batch(batch, cache);
            };
            const std::vector<Tensor> ftrain = run_split(train_split);
            const std::vector<Tensor> fval = run_split(val_split);
            const std::vector<Tensor> ftest = run_split(test_split);

            stage = "train-detector-" + strategy_name;
            DetectorTrainConfig dc = cfg.detector;
            dc.seed = derive_seed(cfg.seed, 30 + strategy_index);
            const DetectorModel model =
                train_detector(ftrain, train_split.labels, fval, val_split.labels, dc);
            save_detector(model, out / ("detector_" + strategy_name));

            stage = "eval-" + strategy_name;
            const EvalReport report = evaluate(model, ftest, test_split.labels);
            write_text_atomic(out / ("eval_" + strategy_name + ".json"), eval_report_to_json(report));
            result.reports[strategy_name] = report;

            if (strategy_name == "first") {
                first_model = model;
                have_first = true;
                first_cfg = xc;

                if (cfg.spectrum) {
                    stage = "spectrum";
                    std::vector<Tensor> real_feats, fake_feats;
                    for (std::size_t i = 0; i < ftest.size(); ++i)
                        (test_split.labels[i] == 0 ? real_feats : fake_feats).push_back(ftest[i]);
                    if (real_feats.size() >= 2 && fake_feats.size() >= 2) {
                        const SpectrumMap real_map = mean_log_spectrum(real_feats);
                        const SpectrumMap fake_map = mean_log_spectrum(fake_feats);
                        save_tensor(out / "spectrum_real.dnft", real_map.mean_log);
                        save_tensor(out / "spectrum_generated.dnft", fake_map.mean_log);
                        write_png(out / "spectrum_real.png", render_map_png(real_map.mean_log));
                        write_png(out / "spectrum_generated.png", render_map_png(fake_map.mean_log));
                    }
                }
                if (cfg.embed_components > 0) {
                    stage = "embed";
                    const PcaResult pca = pca_embed(ftest, cfg.embed_components);
                    save_tensor(out / "embed.dnft", pca.coords);
                    json ej{{"labels", test_split.labels}, {"eigenvalues", pca.eigenvalues}};
                    write_text_atomic(out / "embed.json", ej.dump(2) + "\n");
                }
            }
            ++strategy_index;
        }

        // ---- raw-pixel baseline ------------------------------------------
        if (cfg.raw_baseline) {
            stage = "train-detector-raw";
            const std::vector<Tensor> rtrain = load_raw_features(train_split.paths, cfg.resolution);
            const std::vector<Tensor> rval = load_raw_features(val_split.paths, cfg.resolution);
            const std::vector<Tensor> rtest = load_raw_features(test_split.paths, cfg.resolution);
            DetectorTrainConfig dc = cfg.detector;
            dc.seed = derive_seed(cfg.seed, 40);
            const DetectorModel model =
                train_detector(rtrain, train_split.labels, rval, val_split.labels, dc);
            save_detector(model, out / "detector_raw");
            stage = "eval-raw";
            const EvalReport report = evaluate(model, rtest, test_split.labels);
            write_text_atomic(out / "eval_raw.json", eval_report_to_json(report));
            result.reports["raw"] = report;
        }

        // ---- perturbation sweep ------------------------------------------
        if (cfg.perturb.enabled && have_first) {
            stage = "perturb-sweep";
            std::vector<ImageU8> test_images(test_split.paths.size());
            parallel::parallel_for(test_split.paths.size(), [&](std::size_t i) {
                test_images[i] = read_png(test_split.paths[i]);
            });
            std::vector<PerturbationSpec> specs;
            for (double s : cfg.perturb.blur_sigmas)
                specs.push_back({PerturbationSpec::Kind::kBlur, s});
            for (int q : cfg.perturb.jpeg_qualities)
                specs.push_back({PerturbationSpec::Kind::kJpeg, static_cast<double>(q)});
            result.sweep = perturbation_sweep(test_images, test_split.labels, first_model, first_cfg, specs);
            write_text_atomic(out / "perturb.json", sweep_to_json(result.sweep));
        }

        // ---- run manifest ------------------------------------------------
        stage = "manifest";
        json manifest{
            {"tool_version", kToolVersion},
            {"mode", "benchmark"},
            {"seed", cfg.seed},
            {"resolution", cfg.resolution},
            {"schedule", {{"total_steps", cfg.schedule.total_steps},
                          {"beta_start", cfg.schedule.beta_start},
                          {"beta_end", cfg.schedule.beta_end}}},
            {"taus", {{"mode", to_string(cfg.taus.mode)}, {"points", taus_extract.taus}}},
            {"gen_taus", {{"steps", cfg.data.gen_steps}, {"points", taus_gen.taus}}},
            {"predictor", {{"kind", cfg.predictor.kind}, {"id", predictor->id()}}},
            {"strategies", cfg.strategies},
            {"detector", {{"arch", to_string(cfg.detector.arch)}, {"width", cfg.detector.width}}},
            {"data", {{"train_per_class", cfg.data.train_per_class},
                      {"val_per_class", cfg.data.val_per_class},
                      {"test_per_class", cfg.data.test_per_class}}},
        };
        write_text_atomic(out / "manifest.json", manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
        write_text_atomic(out / "failure.json",
                          json{{"stage", stage}, {"error", e.what()}}.dump(2) + "\n");
        throw;
    }
    return result;
}

}  // namespace dnf
