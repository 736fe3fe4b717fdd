#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dnf/diffusion.hpp"
#include "dnf/image.hpp"
#include "dnf/predictor.hpp"
#include "dnf/schedule.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

enum class FusionStrategy { kFirst, kAvg, kLast };

std::string to_string(FusionStrategy s);
FusionStrategy fusion_strategy_from_string(const std::string& s);

// Collapse a noise sequence into one tensor: first element, elementwise mean,
// or last element.
Tensor fuse(const std::vector<Tensor>& noises, FusionStrategy strategy);

struct DnfProvenance {
    std::string predictor_id;
    int total_steps = 0;
    double beta_start = 0.0, beta_end = 0.0;
    std::vector<int> taus;
    std::string strategy;
    std::string content_hash;  // hex of source-image hash
};

struct DnfFeature {
    Tensor values;  // f32-valued, working resolution
    DnfProvenance provenance;
};

struct ExtractConfig {
    int working_resolution = 32;
    NoiseSchedule schedule;
    TimestepSequence taus;
    const NoisePredictor* predictor = nullptr;
    FusionStrategy strategy = FusionStrategy::kFirst;
};

// Canonical JSON of everything that affects extraction output; its hash keys
// the feature cache together with the image content hash.
std::string config_canonical_json(const ExtractConfig& config);
std::uint64_t config_hash(const ExtractConfig& config);
std::string cache_key(std::uint64_t content_hash, std::uint64_t cfg_hash);

// Grayscale, resize to working resolution, map to [-1, 1], invert, fuse.
// With the first-element strategy only one predictor evaluation is made.
DnfFeature extract_dnf(const ImageU8& image, const ExtractConfig& config);

struct BatchItem {
    std::filesystem::path source;
    std::string key;        // cache key, empty if the image was unreadable
    bool ok = false;
    bool computed = false;  // false on cache hit
    std::string error;
};

struct BatchResult {
    std::vector<BatchItem> items;  // input order
    std::size_t failures = 0;
};

// Extract features for many images into cache_dir, skipping keys already
// present. Per-item failures are recorded and the batch continues. Output
// bytes are independent of the worker count.
BatchResult extract_batch(const std::vector<std::filesystem::path>& images,
                          const ExtractConfig& config,
                          const std::filesystem::path& cache_dir);

std::filesystem::path feature_path(const std::filesystem::path& cache_dir, const std::string& key);
Tensor load_feature(const std::filesystem::path& cache_dir, const std::string& key);

}  // namespace dnf
