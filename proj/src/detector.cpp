#include "dnf/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "dnf/errors.hpp"
#include "dnf/io.hpp"
#include "dnf/parallel.hpp"
#include "dnf/rng.hpp"

namespace dnf {

std::string to_string(DetectorArch a) {
    switch (a) {
        case DetectorArch::kLinear: return "linear";
        case DetectorArch::kResnet: return "resnet";
    }
    throw std::logic_error("bad detector arch");
}

DetectorArch detector_arch_from_string(const std::string& s) {
    if (s == "linear") return DetectorArch::kLinear;
    if (s == "resnet") return DetectorArch::kResnet;
    throw std::invalid_argument("unknown detector arch: " + s);
}

namespace {

enum ResParam {
    kStemW, kStemB,
    kB1AW, kB1AB, kB1BW, kB1BB,
    kB2AW, kB2AB, kB2BW, kB2BB, kB2PW, kB2PB,
    kB3AW, kB3AB, kB3BW, kB3BB, kB3PW, kB3PB,
    kHeadW, kHeadB, kResParamCount
};

struct BlockShape {
    nn::ConvShape convA, convB, proj;
    bool has_proj;
    int in_ch, out_ch, in_res, out_res;
};

struct ResLayout {
    int c, r;
    nn::ConvShape stem;
    int stem_res;
    BlockShape b[3];
    int feat_dim;
};

ResLayout make_layout(int width, int input_res) {
    ResLayout ly;
    ly.c = width;
    ly.r = input_res;
    ly.stem = {1, width, 3, 2, 1};
    ly.stem_res = ly.stem.out_dim(input_res);
    const int strides[3] = {1, 2, 2};
    int in_ch = width, res = ly.stem_res;
    for (int i = 0; i < 3; ++i) {
        const int out_ch = i == 0 ? width : 2 * width;
        BlockShape& b = ly.b[i];
        b.in_ch = in_ch;
        b.out_ch = out_ch;
        b.in_res = res;
        b.convA = {in_ch, out_ch, 3, strides[i], 1};
        b.out_res = b.convA.out_dim(res);
        b.convB = {out_ch, out_ch, 3, 1, 1};
        b.has_proj = strides[i] != 1 || in_ch != out_ch;
        b.proj = {in_ch, out_ch, 1, strides[i], 0};
        in_ch = out_ch;
        res = b.out_res;
    }
    ly.feat_dim = in_ch;
    if (res < 1) throw std::invalid_argument("input resolution too small for the residual net");
    return ly;
}

Shape res_param_dims(const ResLayout& ly, int index) {
    auto conv_dims = [](const nn::ConvShape& cs) {
        return Shape{static_cast<std::size_t>(cs.out_ch), static_cast<std::size_t>(cs.in_ch),
                     static_cast<std::size_t>(cs.ksize), static_cast<std::size_t>(cs.ksize)};
    };
    auto bias_dims = [](const nn::ConvShape& cs) {
        return Shape{static_cast<std::size_t>(cs.out_ch)};
    };
    switch (index) {
        case kStemW: return conv_dims(ly.stem);
        case kStemB: return bias_dims(ly.stem);
        case kB1AW: return conv_dims(ly.b[0].convA);
        case kB1AB: return bias_dims(ly.b[0].convA);
        case kB1BW: return conv_dims(ly.b[0].convB);
        case kB1BB: return bias_dims(ly.b[0].convB);
        case kB2AW: return conv_dims(ly.b[1].convA);
        case kB2AB: return bias_dims(ly.b[1].convA);
        case kB2BW: return conv_dims(ly.b[1].convB);
        case kB2BB: return bias_dims(ly.b[1].convB);
        case kB2PW: return conv_dims(ly.b[1].proj);
        case kB2PB: return bias_dims(ly.b[1].proj);
        case kB3AW: return conv_dims(ly.b[2].convA);
        case kB3AB: return bias_dims(ly.b[2].convA);
        case kB3BW: return conv_dims(ly.b[2].convB);
        case kB3BB: return bias_dims(ly.b[2].convB);
        case kB3PW: return conv_dims(ly.b[2].proj);
        case kB3PB: return bias_dims(ly.b[2].proj);
        case kHeadW: return Shape{1, static_cast<std::size_t>(ly.feat_dim)};
        case kHeadB: return Shape{1};
        default: throw std::logic_error("bad detector param index");
    }
}

const char* kResParamNames[kResParamCount] = {
    "stem.weight", "stem.bias",
    "b1.convA.weight", "b1.convA.bias", "b1.convB.weight", "b1.convB.bias",
    "b2.convA.weight", "b2.convA.bias", "b2.convB.weight", "b2.convB.bias",
    "b2.proj.weight", "b2.proj.bias",
    "b3.convA.weight", "b3.convA.bias", "b3.convB.weight", "b3.convB.bias",
    "b3.proj.weight", "b3.proj.bias",
    "head.weight", "head.bias",
};

std::vector<nn::Param> make_params(DetectorArch arch, const ResLayout& ly) {
    std::vector<nn::Param> p;
    if (arch == DetectorArch::kLinear) {
        p.emplace_back("head.weight", static_cast<std::size_t>(ly.r) * ly.r);
        p.emplace_back("head.bias", 1);
        return p;
    }
    p.reserve(kResParamCount);
    for (int i = 0; i < kResParamCount; ++i)
        p.emplace_back(kResParamNames[i], shape_numel(res_param_dims(ly, i)));
    return p;
}

void init_params(DetectorArch arch, const ResLayout& ly, std::vector<nn::Param>& params, Rng& rng) {
    if (arch == DetectorArch::kLinear) {
        nn::he_init(params[0], params[0].value.size(), rng);
        return;
    }
    for (int i = 0; i < kResParamCount; i += 2) {
        const Shape dims = res_param_dims(ly, i);
        std::size_t fan_in = 1;
        for (std::size_t d = 1; d < dims.size(); ++d) fan_in *= dims[d];
        nn::he_init(params[static_cast<std::size_t>(i)], fan_in, rng);
    }
}

struct BlockActs {
    std::vector<double> zA, aA, zB, zS, aO;
};

struct ResActs {
    std::vector<double> stem_z, stem_a;
    BlockActs b[3];
    std::vector<double> g;
    double logit = 0.0;
};

std::size_t plane(int ch, int res) { return static_cast<std::size_t>(ch) * res * res; }

double forward_resnet(const std::vector<nn::Param>& p, const ResLayout& ly,
                      const double* x, ResActs& a) {
    a.stem_z.resize(plane(ly.c, ly.stem_res));
    a.stem_a.resize(a.stem_z.size());
    nn::conv2d_forward(x, ly.r, ly.r, ly.stem, p[kStemW].value.data(), p[kStemB].value.data(),
                       a.stem_z.data());
    nn::relu_forward(a.stem_z.data(), a.stem_z.size(), a.stem_a.data());
    const double* cur = a.stem_a.data();
    for (int i = 0; i < 3; ++i) {
        const BlockShape& bs = ly.b[i];
        BlockActs& ba = a.b[i];
        const std::size_t out_n = plane(bs.out_ch, bs.out_res);
        const int base = i == 0 ? kB1AW : (i == 1 ? kB2AW : kB3AW);
        ba.zA.resize(out_n);
        ba.aA.resize(out_n);
        ba.zB.resize(out_n);
        ba.zS.resize(out_n);
        ba.aO.resize(out_n);
        nn::conv2d_forward(cur, bs.in_res, bs.in_res, bs.convA, p[base].value.data(),
                           p[base + 1].value.data(), ba.zA.data());
        nn::relu_forward(ba.zA.data(), out_n, ba.aA.data());
        nn::conv2d_forward(ba.aA.data(), bs.out_res, bs.out_res, bs.convB, p[base + 2].value.data(),
                           p[base + 3].value.data(), ba.zB.data());
        if (bs.has_proj) {
            nn::conv2d_forward(cur, bs.in_res, bs.in_res, bs.proj, p[base + 4].value.data(),
                               p[base + 5].value.data(), ba.zS.data());
            for (std::size_t k = 0; k < out_n; ++k) ba.zS[k] += ba.zB[k];
        } else {
            for (std::size_t k = 0; k < out_n; ++k) ba.zS[k] = ba.zB[k] + cur[k];
        }
        nn::relu_forward(ba.zS.data(), out_n, ba.aO.data());
        cur = ba.aO.data();
    }
    a.g.resize(static_cast<std::size_t>(ly.feat_dim));
    nn::global_avg_pool_forward(cur, ly.feat_dim, ly.b[2].out_res, ly.b[2].out_res, a.g.data());
    nn::linear_forward(a.g.data(), ly.feat_dim, 1, p[kHeadW].value.data(), p[kHeadB].value.data(),
                       &a.logit);
    return a.logit;
}

void backward_resnet(const std::vector<nn::Param>& p, const ResLayout& ly, const double* x,
                     const ResActs& a, double dlogit, std::vector<std::vector<double>>& g) {
    std::vector<double> gg(static_cast<std::size_t>(ly.feat_dim));
    nn::linear_backward(a.g.data(), ly.feat_dim, 1, p[kHeadW].value.data(), &dlogit, gg.data(),
                        g[kHeadW].data(), g[kHeadB].data());
    std::vector<double> gcur(plane(ly.feat_dim, ly.b[2].out_res));
    nn::global_avg_pool_backward(gg.data(), ly.feat_dim, ly.b[2].out_res, ly.b[2].out_res,
                                 gcur.data());
    for (int i = 2; i >= 0; --i) {
        const BlockShape& bs = ly.b[i];
        const BlockActs& ba = a.b[i];
        const std::size_t out_n = plane(bs.out_ch, bs.out_res);
        const std::size_t in_n = plane(bs.in_ch, bs.in_res);
        const int base = i == 0 ? kB1AW : (i == 1 ? kB2AW : kB3AW);
        const double* a_prev = i == 0 ? a.stem_a.data() : a.b[i - 1].aO.data();

        std::vector<double> gzS(out_n), gaA(out_n, 0.0), gzA(out_n), gprev(in_n, 0.0);
        nn::relu_backward(ba.zS.data(), gcur.data(), out_n, gzS.data());
        nn::conv2d_backward(ba.aA.data(), bs.out_res, bs.out_res, bs.convB, p[base + 2].value.data(),
                            gzS.data(), gaA.data(), g[base + 2].data(), g[base + 3].data());
        nn::relu_backward(ba.zA.data(), gaA.data(), out_n, gzA.data());
        nn::conv2d_backward(a_prev, bs.in_res, bs.in_res, bs.convA, p[base].value.data(),
                            gzA.data(), gprev.data(), g[base].data(), g[base + 1].data());
        if (bs.has_proj) {
            nn::conv2d_backward(a_prev, bs.in_res, bs.in_res, bs.proj, p[base + 4].value.data(),
                                gzS.data(), gprev.data(), g[base + 4].data(), g[base + 5].data());
        } else {
            for (std::size_t k = 0; k < in_n; ++k) gprev[k] += gzS[k];
        }
        gcur = std::move(gprev);
    }
    std::vector<double> gstem_z(a.stem_z.size());
    nn::relu_backward(a.stem_z.data(), gcur.data(), a.stem_z.size(), gstem_z.data());
    nn::conv2d_backward(x, ly.r, ly.r, ly.stem, p[kStemW].value.data(), gstem_z.data(), nullptr,
                        g[kStemW].data(), g[kStemB].data());
}

double forward_any(const DetectorModel& m, const ResLayout& ly, const double* x) {
    if (m.arch == DetectorArch::kLinear) {
        double logit;
        nn::linear_forward(x, ly.r * ly.r, 1, m.params[0].value.data(), m.params[1].value.data(),
                           &logit);
        return logit;
    }
    ResActs a;
    return forward_resnet(m.params, ly, x, a);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<double> normalize_plane(const DetectorModel& m, const Tensor& feature) {
    if (feature.shape().size() != 2 || static_cast<int>(feature.rows()) != m.input_res ||
        static_cast<int>(feature.cols()) != m.input_res)
        throw std::invalid_argument("feature shape does not match detector stats");
    std::vector<double> out(feature.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (feature.data()[i] - m.norm_mean.data()[i]) / m.norm_std.data()[i];
    return out;
}

void flip_horizontal(std::vector<double>& p, int r) {
    for (int y = 0; y < r; ++y)
        std::reverse(p.begin() + static_cast<std::ptrdiff_t>(y) * r,
                     p.begin() + static_cast<std::ptrdiff_t>(y + 1) * r);
}

void check_both_classes(const std::vector<int>& labels, const char* which) {
    bool has0 = false, has1 = false;
    for (int l : labels) {
        if (l == 0) has0 = true;
        else if (l == 1) has1 = true;
        else throw std::invalid_argument("labels must be 0 or 1");
    }
    if (!has0 || !has1)
        throw std::invalid_argument(std::string(which) + " set must contain both classes");
}

}  // namespace

double predict_logit(const DetectorModel& model, const Tensor& feature) {
    const ResLayout ly = make_layout(model.width, model.input_res);
    const std::vector<double> x = normalize_plane(model, feature);
    return forward_any(model, ly, x.data());
}

double predict_score(const DetectorModel& model, const Tensor& feature) {
    return sigmoid(predict_logit(model, feature));
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores/labels size mismatch");
    if (scores.empty()) throw std::invalid_argument("empty input");
    std::size_t total_pos = 0;
    for (int l : labels) total_pos += l == 1 ? 1u : 0u;
    if (total_pos == 0 || total_pos == labels.size())
        throw MetricError("average precision needs both classes");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0;
    std::size_t pos_seen = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (labels[order[k]] == 1) {
            ++pos_seen;
            const double precision = static_cast<double>(pos_seen) / static_cast<double>(k + 1);
            ap += precision / static_cast<double>(total_pos);
        }
    }
    return ap;
}

double accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                double threshold) {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores/labels size mismatch");
    if (scores.empty()) throw std::invalid_argument("empty input");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int pred = scores[i] >= threshold ? 1 : 0;
        if (pred == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

EvalReport evaluate(const DetectorModel& model, const std::vector<Tensor>& features,
                    const std::vector<int>& labels) {
    if (features.size() != labels.size()) throw std::invalid_argument("features/labels size mismatch");
    if (features.empty()) throw std::invalid_argument("empty evaluation set");
    const ResLayout ly = make_layout(model.width, model.input_res);
    EvalReport report;
    report.scores.resize(features.size());
    report.labels = labels;
    parallel::parallel_for(features.size(), [&](std::size_t i) {
        const std::vector<double> x = normalize_plane(model, features[i]);
        report.scores[i] = sigmoid(forward_any(model, ly, x.data()));
    });
    for (int l : labels) {
        if (l == 0) ++report.count_real;
        else ++report.count_generated;
    }
    report.accuracy = accuracy(report.scores, labels, model.threshold);
    report.average_precision = average_precision(report.scores, labels);
    return report;
}

DetectorModel train_detector(const std::vector<Tensor>& train_features,
                             const std::vector<int>& train_labels,
                             const std::vector<Tensor>& val_features,
                             const std::vector<int>& val_labels,
                             const DetectorTrainConfig& config) {
    if (train_features.size() != train_labels.size() || val_features.size() != val_labels.size())
        throw std::invalid_argument("features/labels size mismatch");
    if (train_features.empty() || val_features.empty())
        throw std::invalid_argument("training and validation sets must be non-empty");
    check_both_classes(train_labels, "training");
    check_both_classes(val_labels, "validation");
    if (config.width < 1 || config.width > 32)
        throw std::invalid_argument("detector width must be in [1, 32]");
    if (config.batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (!(config.lr0 > 0.0)) throw std::invalid_argument("learning rate must be positive");

    const std::size_t r0 = train_features.front().rows(), c0 = train_features.front().cols();
    if (train_features.front().shape().size() != 2 || r0 != c0)
        throw std::invalid_argument("features must be square 2-D tensors");
    for (const auto& f : train_features)
        if (!f.same_shape(train_features.front()))
            throw std::invalid_argument("training feature shapes differ");
    for (const auto& f : val_features)
        if (!f.same_shape(train_features.front()))
            throw std::invalid_argument("validation feature shapes differ");

    DetectorModel model;
    model.arch = config.arch;
    model.width = config.width;
    model.input_res = static_cast<int>(r0);
    model.seed = config.seed;

    // Per-pixel standardization stats from the training features only.
    const std::size_t dim = train_features.front().size();
    const double n_train = static_cast<double>(train_features.size());
    model.norm_mean = Tensor(train_features.front().shape());
    model.norm_std = Tensor(train_features.front().shape());
    for (std::size_t i = 0; i < dim; ++i) {
        double s = 0.0;
        for (const auto& f : train_features) s += f.data()[i];
        model.norm_mean.data()[i] = s / n_train;
    }
    for (std::size_t i = 0; i < dim; ++i) {
        double s = 0.0;
        const double mean = model.norm_mean.data()[i];
        for (const auto& f : train_features) {
            const double d = f.data()[i] - mean;
            s += d * d;
        }
        model.norm_std.data()[i] = std::max(std::sqrt(s / n_train), 1e-6);
    }
    // Stats are persisted as f32; narrowing now keeps save/load an identity.
    model.norm_mean.narrow_to_f32();
    model.norm_std.narrow_to_f32();

    const ResLayout ly = make_layout(config.width, model.input_res);
    model.params = make_params(config.arch, ly);
    Rng rng(config.seed);
    init_params(config.arch, ly, model.params, rng);
    for (auto& p : model.params)
        for (double& v : p.value) v = static_cast<double>(static_cast<float>(v));

    // Raw (unnormalized) planes; flips apply to the raw feature, then stats.
    std::vector<std::vector<double>> raw(train_features.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
        raw[i].assign(train_features[i].data(), train_features[i].data() + dim);
    std::vector<std::vector<double>> val_planes(val_features.size());
    for (std::size_t i = 0; i < val_planes.size(); ++i)
        val_planes[i] = normalize_plane(model, val_features[i]);

    nn::Adam opt;
    const std::size_t n = raw.size();
    const std::size_t batch = static_cast<std::size_t>(config.batch);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::vector<std::vector<std::vector<double>>> slot_grads(batch);
    for (auto& g : slot_grads) {
        g.resize(model.params.size());
        for (std::size_t pi = 0; pi < model.params.size(); ++pi)
            g[pi].resize(model.params[pi].value.size());
    }
    std::vector<double> slot_loss(batch);

    const bool plateau = config.fixed_epochs < 0;
    double lr = config.lr0;
    double best_val = -1.0;
    int since_improve = 0;
    Rng train_rng(derive_seed(config.seed, 2));

    auto val_accuracy = [&]() {
        std::vector<double> scores(val_planes.size());
        parallel::parallel_for(val_planes.size(), [&](std::size_t i) {
            scores[i] = sigmoid(forward_any(model, ly, val_planes[i].data()));
        });
        return accuracy(scores, val_labels, model.threshold);
    };

    long long epoch = 0;
    for (; epoch < config.max_epochs; ++epoch) {
        if (!plateau && epoch >= config.fixed_epochs) break;
        if (config.shuffle) train_rng.shuffle(order);
        // Flip decisions are drawn serially so the worker count cannot move them.
        std::vector<std::uint8_t> flip(n);
        for (std::size_t i = 0; i < n; ++i)
            flip[i] = config.flip_prob > 0.0 && train_rng.uniform() < config.flip_prob ? 1 : 0;

        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t bn = std::min(batch, n - start);
            parallel::parallel_for(bn, [&](std::size_t s) {
                const std::size_t idx = order[start + s];
                std::vector<double> x = raw[idx];
                if (flip[start + s]) flip_horizontal(x, model.input_res);
                for (std::size_t i = 0; i < dim; ++i)
                    x[i] = (x[i] - model.norm_mean.data()[i]) / model.norm_std.data()[i];
                auto& g = slot_grads[s];
                for (auto& gp : g) std::fill(gp.begin(), gp.end(), 0.0);
                const double y = static_cast<double>(train_labels[idx]);
                double logit;
                if (config.arch == DetectorArch::kLinear) {
                    nn::linear_forward(x.data(), static_cast<int>(dim), 1,
                                       model.params[0].value.data(), model.params[1].value.data(),
                                       &logit);
                    const double dz = (sigmoid(logit) - y) / static_cast<double>(bn);
                    nn::linear_backward(x.data(), static_cast<int>(dim), 1,
                                        model.params[0].value.data(), &dz, nullptr, g[0].data(),
                                        g[1].data());
                } else {
                    ResActs a;
                    logit = forward_resnet(model.params, ly, x.data(), a);
                    const double dz = (sigmoid(logit) - y) / static_cast<double>(bn);
                    backward_resnet(model.params, ly, x.data(), a, dz, g);
                }
                slot_loss[s] = (std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)))) /
                               static_cast<double>(bn);
            });
            double loss = 0.0;
            for (std::size_t s = 0; s < bn; ++s) loss += slot_loss[s];
            if (!std::isfinite(loss))
                throw TrainingError("non-finite detector loss in epoch " + std::to_string(epoch));
            for (std::size_t pi = 0; pi < model.params.size(); ++pi) {
                auto& grad = model.params[pi].grad;
                std::fill(grad.begin(), grad.end(), 0.0);
                for (std::size_t s = 0; s < bn; ++s) {
                    const auto& g = slot_grads[s][pi];
                    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
                }
            }
            opt.step(model.params, lr);
        }
        model.lr_history.push_back(lr);

        if (plateau) {
            const double acc = val_accuracy();
            if (acc >= best_val + config.plateau_min_delta) {
                best_val = acc;
                since_improve = 0;
            } else if (++since_improve >= config.plateau_patience) {
                since_improve = 0;
                lr /= config.lr_drop_factor;
                if (lr <= config.lr_min * (1.0 + 1e-9)) {
                    ++epoch;
                    break;
                }
            }
        }
    }

    model.epochs = epoch;
    model.final_lr = model.lr_history.empty() ? config.lr0 : model.lr_history.back();
    for (auto& p : model.params)
        for (double& v : p.value) v = static_cast<double>(static_cast<float>(v));
    return model;
}

std::string eval_report_to_json(const EvalReport& report) {
    nlohmann::json j{
        {"accuracy", report.accuracy},
        {"average_precision", report.average_precision},
        {"count_real", report.count_real},
        {"count_generated", report.count_generated},
        {"scores", report.scores},
        {"labels", report.labels},
    };
    return j.dump(2) + "\n";
}

void save_detector(const DetectorModel& model, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "params");
    const ResLayout ly = make_layout(model.width, model.input_res);
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        const auto& p = model.params[i];
        Shape dims;
        if (model.arch == DetectorArch::kLinear)
            dims = i == 0 ? Shape{1, static_cast<std::size_t>(ly.r) * ly.r} : Shape{1};
        else
            dims = res_param_dims(ly, static_cast<int>(i));
        std::vector<float> vals(p.value.begin(), p.value.end());
        std::ostringstream os(std::ios::binary);
        write_container(os, dims, vals);
        const std::string bytes = os.str();
        write_file_atomic(dir / "params" / (p.name + ".dnft"), bytes.data(), bytes.size());
    }
    save_tensor(dir / "norm_mean.dnft", model.norm_mean);
    save_tensor(dir / "norm_std.dnft", model.norm_std);
    nlohmann::json manifest{
        {"kind", "detector"},
        {"arch", to_string(model.arch)},
        {"width", model.width},
        {"input_res", model.input_res},
        {"threshold", model.threshold},
        {"seed", model.seed},
        {"epochs", model.epochs},
        {"final_lr", model.final_lr},
        {"lr_history", model.lr_history},
    };
    write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

DetectorModel load_detector(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw IoError("cannot open detector manifest in " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(mf);
    if (manifest.at("kind").get<std::string>() != "detector")
        throw IoError("not a detector directory: " + dir.string());
    DetectorModel model;
    model.arch = detector_arch_from_string(manifest.at("arch").get<std::string>());
    model.width = manifest.at("width").get<int>();
    model.input_res = manifest.at("input_res").get<int>();
    model.threshold = manifest.at("threshold").get<double>();
    model.seed = manifest.at("seed").get<std::uint64_t>();
    model.epochs = manifest.at("epochs").get<long long>();
    model.final_lr = manifest.at("final_lr").get<double>();
    model.lr_history = manifest.at("lr_history").get<std::vector<double>>();
    model.norm_mean = load_tensor(dir / "norm_mean.dnft");
    model.norm_std = load_tensor(dir / "norm_std.dnft");
    const ResLayout ly = make_layout(model.width, model.input_res);
    model.params = make_params(model.arch, ly);
    for (auto& p : model.params) {
        std::ifstream f(dir / "params" / (p.name + ".dnft"), std::ios::binary);
        if (!f) throw IoError("missing detector parameter file " + p.name);
        F32Payload payload = read_container(f);
        if (payload.values.size() != p.value.size())
            throw IoError("detector parameter size mismatch for " + p.name);
        for (std::size_t i = 0; i < p.value.size(); ++i)
            p.value[i] = static_cast<double>(payload.values[i]);
    }
    return model;
}

}  // namespace dnf
