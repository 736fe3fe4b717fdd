#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dnf/detector.hpp"
#include "dnf/dnf.hpp"
#include "dnf/perturb.hpp"
#include "dnf/predictor.hpp"
#include "dnf/schedule.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

inline constexpr const char* kToolVersion = "1.0.0";

// Dataset root holds real/ and generated/ PNG subdirectories plus
// manifest.tsv rows of (filename, label, source tag). Labels: 0 real, 1 generated.
struct ManifestRow {
    std::string filename;  // relative to the dataset root
    int label = 0;
    std::string source;
};

void write_dataset_manifest(const std::filesystem::path& root,
                            const std::vector<ManifestRow>& rows);
// Reads and validates: every row must resolve to an existing decodable file.
std::vector<ManifestRow> read_dataset_manifest(const std::filesystem::path& root);

struct TextureParams {
    int resolution = 32;
    double min_corr = 0.0;  // per-image correlation length drawn from this range
    double max_corr = 4.0;
    double edge_prob = 0.7;  // chance of overlaying quantized step edges
    int max_edges = 3;
    double edge_amp = 60.0;
    double field_amp = 45.0;  // random-field amplitude around mid-gray
};

// Structured synthetic stand-ins for natural images: Gaussian random fields
// with per-image correlation length, optionally overlaid with hard step
// edges. Images land under root/real/, one per derive_seed(seed, index).
std::vector<ManifestRow> gen_real_dataset(const std::filesystem::path& root, std::size_t n,
                                          std::uint64_t seed, const TextureParams& params);

// One deterministic DDIM draw: x_T ~ N(0, I) from derive_seed(seed, index),
// run backwards through the timestep sequence. Returned in [-1, 1] scale
// before any 8-bit mapping.
Tensor generate_sample(std::uint64_t seed, std::size_t index, const NoisePredictor& predictor,
                       const NoiseSchedule& schedule, const TimestepSequence& taus,
                       int resolution);

std::vector<ManifestRow> gen_fake_dataset(const std::filesystem::path& root, std::size_t n,
                                          std::uint64_t seed, const NoisePredictor& predictor,
                                          const NoiseSchedule& schedule,
                                          const TimestepSequence& taus, int resolution);

// One predictor description covering every implementation the tools accept.
struct PredictorSpec {
    std::string kind = "trainable";  // trainable | analytic | constant | external | load
    int width = 16, embed_dim = 16;  // trainable architecture
    long long train_steps = 1500;
    int batch = 8;
    double lr = 2e-3;
    double mu = 0.0, sigma2 = 1.0;  // analytic
    double value = 0.0;             // constant
    std::vector<std::string> command;  // external peer argv
    int timeout_ms = 10000;
    std::string dir;  // load: predictor directory, relative to base_dir
};

// Builds (and for "trainable", trains) a predictor. train_images may be null
// for kinds that need no data; "load" resolves its directory against base_dir.
std::unique_ptr<NoisePredictor> make_predictor(const PredictorSpec& spec,
                                               const NoiseSchedule& schedule,
                                               const std::vector<Tensor>* train_images,
                                               const std::filesystem::path& base_dir,
                                               std::uint64_t seed);

// Feature list file: one "<path>\t<label>" per line, label 0 real /
// 1 generated, paths resolved against the file's own directory (absolute
// paths pass through).
struct FeatureSet {
    std::vector<Tensor> features;
    std::vector<int> labels;
};

FeatureSet read_features_manifest(const std::filesystem::path& tsv_path);

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::filesystem::path> cache_dir;
};

struct ExperimentResult {
    std::filesystem::path out_dir;
    // Keyed by strategy name plus "raw" for the pixel baseline.
    std::map<std::string, EvalReport> reports;
    std::vector<SweepRow> sweep;
};

// Drives the configured pipeline (generate, train predictor, extract, train
// detectors, evaluate, perturbation sweep, spectra, embedding) and writes all
// reports plus a run manifest under the output directory. On a stage failure
// a failure.json is left behind and the error propagates.
ExperimentResult run_experiment(const std::filesystem::path& config_path,
                                const RunOverrides& overrides);

}  // namespace dnf
