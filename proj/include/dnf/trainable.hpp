#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "dnf/nn.hpp"
#include "dnf/predictor.hpp"

namespace dnf {

struct PredictorArch {
    int width = 16;      // conv channels, capped at 32
    int embed_dim = 16;  // sinusoidal time feature size, even
};

// Three-layer convolutional denoiser with an additive per-channel time
// embedding. Parameters are rounded to f32 values at init and after training
// so the in-memory model and its on-disk form behave identically.
class TrainablePredictor final : public NoisePredictor {
public:
    TrainablePredictor(const PredictorArch& arch, std::uint64_t seed);

    Tensor predict(const Tensor& x, int t, const NoiseSchedule& schedule) const override;
    std::string id() const override;

    const PredictorArch& arch() const { return arch_; }
    const std::vector<nn::Param>& params() const { return params_; }
    std::vector<nn::Param>& mutable_params() { return params_; }
    std::uint64_t seed() const { return seed_; }
    long long trained_steps() const { return trained_steps_; }
    double final_loss() const { return final_loss_; }

    void set_training_record(long long steps, double loss);
    void round_params_to_f32();

    void save(const std::filesystem::path& dir) const;
    static TrainablePredictor load(const std::filesystem::path& dir);

private:
    PredictorArch arch_;
    std::uint64_t seed_;
    long long trained_steps_ = 0;
    double final_loss_ = std::numeric_limits<double>::quiet_NaN();
    std::vector<nn::Param> params_;
};

struct PredictorTrainConfig {
    long long steps = 0;
    int batch = 16;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    PredictorArch arch{};
};

// Denoising objective: for each batch item draw x0 from the dataset, t uniform
// on [1, T], eps ~ N(0, I), form x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
// and regress the net output onto eps in mean squared error.
TrainablePredictor train_predictor(const std::vector<Tensor>& dataset,
                                   const NoiseSchedule& schedule,
                                   const PredictorTrainConfig& config);

}  // namespace dnf
