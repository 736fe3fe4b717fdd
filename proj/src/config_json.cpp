#include "dnf/config_json.hpp"

#include <algorithm>
#include <stdexcept>

#include "dnf/errors.hpp"
#include "dnf/external.hpp"
#include "dnf/trainable.hpp"

namespace dnf {

using nlohmann::json;

void check_config_keys(const json& j, const std::vector<std::string>& allowed,
                       const std::string& where) {
    if (!j.is_object()) throw IoError("config section " + where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw IoError("unknown config key \"" + key + "\" in " + where);
    }
}

NoiseSchedule schedule_from_json(const json& j) {
    check_config_keys(j, {"total_steps", "beta_start", "beta_end"}, "schedule");
    int total_steps = 1000;
    double beta_start = 1e-4, beta_end = 0.02;
    if (j.contains("total_steps")) total_steps = j.at("total_steps").get<int>();
    if (j.contains("beta_start")) beta_start = j.at("beta_start").get<double>();
    if (j.contains("beta_end")) beta_end = j.at("beta_end").get<double>();
    return make_linear_schedule(total_steps, beta_start, beta_end);
}

TimestepSequence taus_from_json(const json& j, int total_steps) {
    check_config_keys(j, {"mode", "steps"}, "taus");
    TimestepMode mode = TimestepMode::kUniform;
    int steps = 8;
    if (j.contains("mode")) mode = timestep_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("steps")) steps = j.at("steps").get<int>();
    return sample_timesteps(total_steps, steps, mode);
}

TextureParams texture_params_from_json(const json& j, int resolution) {
    check_config_keys(j, {"min_corr", "max_corr", "edge_prob", "max_edges", "edge_amp", "field_amp"},
                      "texture");
    TextureParams t;
    t.resolution = resolution;
    if (j.contains("min_corr")) t.min_corr = j.at("min_corr").get<double>();
    if (j.contains("max_corr")) t.max_corr = j.at("max_corr").get<double>();
    if (j.contains("edge_prob")) t.edge_prob = j.at("edge_prob").get<double>();
    if (j.contains("max_edges")) t.max_edges = j.at("max_edges").get<int>();
    if (j.contains("edge_amp")) t.edge_amp = j.at("edge_amp").get<double>();
    if (j.contains("field_amp")) t.field_amp = j.at("field_amp").get<double>();
    return t;
}

PredictorSpec predictor_spec_from_json(const json& j) {
    check_config_keys(j,
                      {"kind", "width", "embed_dim", "train_steps", "batch", "lr", "mu", "sigma2",
                       "value", "command", "timeout_ms", "dir"},
                      "predictor");
    PredictorSpec c;
    if (j.contains("kind")) c.kind = j.at("kind").get<std::string>();
    if (j.contains("width")) c.width = j.at("width").get<int>();
    if (j.contains("embed_dim")) c.embed_dim = j.at("embed_dim").get<int>();
    if (j.contains("train_steps")) c.train_steps = j.at("train_steps").get<long long>();
    if (j.contains("batch")) c.batch = j.at("batch").get<int>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("mu")) c.mu = j.at("mu").get<double>();
    if (j.contains("sigma2")) c.sigma2 = j.at("sigma2").get<double>();
    if (j.contains("value")) c.value = j.at("value").get<double>();
    if (j.contains("command")) c.command = j.at("command").get<std::vector<std::string>>();
    if (j.contains("timeout_ms")) c.timeout_ms = j.at("timeout_ms").get<int>();
    if (j.contains("dir")) c.dir = j.at("dir").get<std::string>();
    return c;
}

DetectorTrainConfig detector_train_config_from_json(const json& j) {
    check_config_keys(j,
                      {"arch", "width", "batch", "lr0", "lr_min", "lr_drop_factor",
                       "plateau_patience", "plateau_min_delta", "flip_prob", "max_epochs", "shuffle",
                       "fixed_epochs"},
                      "detector");
    DetectorTrainConfig c;
    if (j.contains("arch")) c.arch = detector_arch_from_string(j.at("arch").get<std::string>());
    if (j.contains("width")) c.width = j.at("width").get<int>();
    if (j.contains("batch")) c.batch = j.at("batch").get<int>();
    if (j.contains("lr0")) c.lr0 = j.at("lr0").get<double>();
    if (j.contains("lr_min")) c.lr_min = j.at("lr_min").get<double>();
    if (j.contains("lr_drop_factor")) c.lr_drop_factor = j.at("lr_drop_factor").get<double>();
    if (j.contains("plateau_patience")) c.plateau_patience = j.at("plateau_patience").get<int>();
    if (j.contains("plateau_min_delta"))
        c.plateau_min_delta = j.at("plateau_min_delta").get<double>();
    if (j.contains("flip_prob")) c.flip_prob = j.at("flip_prob").get<double>();
    if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
    if (j.contains("shuffle")) c.shuffle = j.at("shuffle").get<bool>();
    if (j.contains("fixed_epochs")) c.fixed_epochs = j.at("fixed_epochs").get<long long>();
    return c;
}

std::unique_ptr<NoisePredictor> make_predictor(const PredictorSpec& spec,
                                               const NoiseSchedule& schedule,
                                               const std::vector<Tensor>* train_images,
                                               const std::filesystem::path& base_dir,
                                               std::uint64_t seed) {
    if (spec.kind == "trainable") {
        if (!train_images || train_images->empty())
            throw std::invalid_argument("trainable predictor needs training images");
        PredictorTrainConfig pc;
        pc.steps = spec.train_steps;
        pc.batch = spec.batch;
        pc.lr = spec.lr;
        pc.seed = seed;
        pc.arch = PredictorArch{spec.width, spec.embed_dim};
        return std::make_unique<TrainablePredictor>(train_predictor(*train_images, schedule, pc));
    }
    if (spec.kind == "analytic")
        return std::make_unique<AnalyticGaussianPredictor>(spec.mu, spec.sigma2);
    if (spec.kind == "constant") return std::make_unique<ConstantPredictor>(spec.value);
    if (spec.kind == "external")
        return std::make_unique<ExternalPredictor>(spec.command, spec.timeout_ms);
    if (spec.kind == "load")
        return std::make_unique<TrainablePredictor>(TrainablePredictor::load(base_dir / spec.dir));
    throw std::invalid_argument("unknown predictor kind: " + spec.kind);
}

}  // namespace dnf
