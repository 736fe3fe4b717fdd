#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dnf/nn.hpp"
#include "dnf/tensor.hpp"

namespace dnf {

enum class DetectorArch { kLinear, kResnet };

std::string to_string(DetectorArch a);
DetectorArch detector_arch_from_string(const std::string& s);

// Binary real-vs-generated classifier over feature maps. The residual net is
// stem conv (stride 2) + three residual blocks (strides 1, 2, 2; channels
// C, 2C, 2C) + global average pool + linear logit; the linear variant scores
// the flattened normalized feature directly.
struct DetectorModel {
    DetectorArch arch = DetectorArch::kResnet;
    int width = 8;  // residual channels, capped at 32
    int input_res = 32;
    Tensor norm_mean, norm_std;  // per-pixel over training features, std floored
    std::vector<nn::Param> params;
    double threshold = 0.5;
    std::uint64_t seed = 0;
    long long epochs = 0;
    double final_lr = 0.0;
    std::vector<double> lr_history;  // learning rate used in each epoch
};

struct DetectorTrainConfig {
    DetectorArch arch = DetectorArch::kResnet;
    int width = 8;
    int batch = 64;
    double lr0 = 1e-4;
    double lr_min = 1e-6;
    double lr_drop_factor = 10.0;
    int plateau_patience = 5;
    double plateau_min_delta = 0.001;  // required validation-accuracy gain
    double flip_prob = 0.5;            // horizontal-flip augmentation
    std::uint64_t seed = 0;
    int max_epochs = 200;       // safety bound on the plateau schedule
    bool shuffle = true;        // test hook: off gives a fixed batch order
    long long fixed_epochs = -1;  // test hook: >= 0 bypasses the plateau schedule
};

struct EvalReport {
    double accuracy = 0.0;
    double average_precision = 0.0;
    std::size_t count_real = 0;
    std::size_t count_generated = 0;
    std::vector<double> scores;  // input order, retained for audit
    std::vector<int> labels;
};

// Labels are 0 = real, 1 = generated. Training follows a validation-plateau
// schedule: the learning rate is divided when validation accuracy fails to
// improve by plateau_min_delta within plateau_patience epochs, and training
// stops once it reaches lr_min.
DetectorModel train_detector(const std::vector<Tensor>& train_features,
                             const std::vector<int>& train_labels,
                             const std::vector<Tensor>& val_features,
                             const std::vector<int>& val_labels,
                             const DetectorTrainConfig& config);

double predict_logit(const DetectorModel& model, const Tensor& feature);
double predict_score(const DetectorModel& model, const Tensor& feature);

EvalReport evaluate(const DetectorModel& model, const std::vector<Tensor>& features,
                    const std::vector<int>& labels);

// Step-interpolated average precision over descending scores, ties kept in
// input order.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);
double accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                double threshold);

std::string eval_report_to_json(const EvalReport& report);

void save_detector(const DetectorModel& model, const std::filesystem::path& dir);
DetectorModel load_detector(const std::filesystem::path& dir);

}  // namespace dnf
