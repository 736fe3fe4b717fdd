#include "dnf/dnf.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "dnf/errors.hpp"
#include "dnf/io.hpp"
#include "dnf/parallel.hpp"

namespace dnf {

std::string to_string(FusionStrategy s) {
    switch (s) {
        case FusionStrategy::kFirst: return "first";
        case FusionStrategy::kAvg: return "avg";
        case FusionStrategy::kLast: return "last";
    }
    throw std::logic_error("bad fusion strategy");
}

FusionStrategy fusion_strategy_from_string(const std::string& s) {
    if (s == "first") return FusionStrategy::kFirst;
    if (s == "avg") return FusionStrategy::kAvg;
    if (s == "last") return FusionStrategy::kLast;
    throw std::invalid_argument("unknown fusion strategy: " + s);
}

Tensor fuse(const std::vector<Tensor>& noises, FusionStrategy strategy) {
    if (noises.empty()) throw std::invalid_argument("cannot fuse an empty noise sequence");
    switch (strategy) {
        case FusionStrategy::kFirst: return noises.front();
        case FusionStrategy::kLast: return noises.back();
        case FusionStrategy::kAvg: {
            Tensor out(noises.front().shape());
            for (const auto& e : noises) {
                if (!e.same_shape(out)) throw std::invalid_argument("noise sequence shapes differ");
                out += e;
            }
            out *= 1.0 / static_cast<double>(noises.size());
            return out;
        }
    }
    throw std::logic_error("bad fusion strategy");
}

std::string config_canonical_json(const ExtractConfig& config) {
    if (config.predictor == nullptr) throw std::invalid_argument("extract config has no predictor");
    nlohmann::json j{
        {"resolution", config.working_resolution},
        {"schedule", {{"total_steps", config.schedule.total_steps},
                      {"beta_start", config.schedule.beta_start},
                      {"beta_end", config.schedule.beta_end}}},
        {"taus", config.taus.taus},
        {"predictor", config.predictor->id()},
        {"strategy", to_string(config.strategy)},
    };
    return j.dump();
}

std::uint64_t config_hash(const ExtractConfig& config) {
    const std::string j = config_canonical_json(config);
    return fnv1a(j.data(), j.size());
}

std::string cache_key(std::uint64_t content_hash, std::uint64_t cfg_hash) {
    return to_hex(content_hash) + "-" + to_hex(cfg_hash);
}

namespace {

void check_config(const ExtractConfig& config) {
    if (config.predictor == nullptr) throw std::invalid_argument("extract config has no predictor");
    if (config.working_resolution < 1) throw std::invalid_argument("working resolution must be >= 1");
    if (config.taus.taus.empty()) throw std::invalid_argument("timestep sequence is empty");
    if (config.strategy != FusionStrategy::kFirst && config.taus.taus.size() < 2)
        throw std::invalid_argument("avg/last fusion needs at least two timestep points");
}

}  // namespace

DnfFeature extract_dnf(const ImageU8& image, const ExtractConfig& config) {
    check_config(config);
    const auto r = static_cast<std::size_t>(config.working_resolution);
    Tensor gray = to_gray(image);
    if (gray.rows() != r || gray.cols() != r) gray = resize_bilinear(gray, r, r);
    const Tensor x = to_unit_range(gray);

    Tensor values;
    if (config.strategy == FusionStrategy::kFirst) {
        // One predictor evaluation; later steps cannot change the fused output.
        values = config.predictor->predict(x, config.taus.taus.front(), config.schedule);
    } else {
        InversionTrace trace = invert(x, config.taus, *config.predictor, config.schedule);
        values = fuse(trace.noises, config.strategy);
    }
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values.data()[i]))
            throw std::runtime_error("extraction produced non-finite feature values");
    values.narrow_to_f32();

    DnfFeature feature;
    feature.values = std::move(values);
    feature.provenance = DnfProvenance{
        config.predictor->id(),
        config.schedule.total_steps,
        config.schedule.beta_start,
        config.schedule.beta_end,
        config.taus.taus,
        to_string(config.strategy),
        to_hex(hash_image(image)),
    };
    return feature;
}

std::filesystem::path feature_path(const std::filesystem::path& cache_dir, const std::string& key) {
    return cache_dir / (key + ".dnft");
}

Tensor load_feature(const std::filesystem::path& cache_dir, const std::string& key) {
    return load_tensor(feature_path(cache_dir, key));
}

namespace {

nlohmann::json provenance_json(const DnfProvenance& p) {
    return nlohmann::json{
        {"predictor", p.predictor_id},
        {"schedule", {{"total_steps", p.total_steps},
                      {"beta_start", p.beta_start},
                      {"beta_end", p.beta_end}}},
        {"taus", p.taus},
        {"strategy", p.strategy},
        {"content_hash", p.content_hash},
    };
}

}  // namespace

BatchResult extract_batch(const std::vector<std::filesystem::path>& images,
                          const ExtractConfig& config,
                          const std::filesystem::path& cache_dir) {
    check_config(config);
    std::filesystem::create_directories(cache_dir);
    const std::uint64_t cfg_hash = config_hash(config);

    BatchResult result;
    result.items.resize(images.size());
    // Items are independent; each slot is written only by its own index, so
    // the worker count cannot change the result.
    parallel::parallel_for(images.size(), [&](std::size_t i) {
        BatchItem& item = result.items[i];
        item.source = images[i];
        try {
            const ImageU8 img = read_png(images[i]);
            item.key = cache_key(hash_image(img), cfg_hash);
            const auto fpath = feature_path(cache_dir, item.key);
            const auto jpath = cache_dir / (item.key + ".json");
            if (std::filesystem::exists(fpath) && std::filesystem::exists(jpath)) {
                item.ok = true;
                return;
            }
            DnfFeature feature = extract_dnf(img, config);
            std::ostringstream os(std::ios::binary);
            write_tensor(os, feature.values);
            const std::string bytes = os.str();
            write_file_atomic(fpath, bytes.data(), bytes.size());
            write_text_atomic(jpath, provenance_json(feature.provenance).dump(2) + "\n");
            item.ok = true;
            item.computed = true;
        } catch (const std::exception& e) {
            item.ok = false;
            item.error = e.what();
        }
    });
    for (const auto& item : result.items)
        if (!item.ok) ++result.failures;
    return result;
}

}  // namespace dnf
