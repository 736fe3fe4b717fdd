#include "dnf/trainable.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "dnf/errors.hpp"
#include "dnf/io.hpp"
#include "dnf/parallel.hpp"

namespace dnf {

namespace {

// Fixed parameter order; serialization and hashing depend on it.
enum ParamIndex { kConv1W, kConv1B, kTembW, kTembB, kConv2W, kConv2B, kConv3W, kConv3B, kParamCount };

struct Layers {
    nn::ConvShape c1, c2, c3;
    int width, embed;
};

Layers make_layers(const PredictorArch& arch) {
    return {{1, arch.width, 3, 1, 1},
            {arch.width, arch.width, 3, 1, 1},
            {arch.width, 1, 3, 1, 1},
            arch.width,
            arch.embed_dim};
}

void check_arch(const PredictorArch& arch) {
    if (arch.width < 1 || arch.width > 32)
        throw std::invalid_argument("predictor width must be in [1, 32]");
    if (arch.embed_dim < 2 || arch.embed_dim % 2 != 0)
        throw std::invalid_argument("embed_dim must be even and >= 2");
}

std::vector<nn::Param> make_params(const Layers& ly) {
    std::vector<nn::Param> p;
    p.reserve(kParamCount);
    p.emplace_back("conv1.weight", ly.c1.weight_count());
    p.emplace_back("conv1.bias", static_cast<std::size_t>(ly.c1.out_ch));
    p.emplace_back("temb.weight", static_cast<std::size_t>(ly.width) * ly.embed);
    p.emplace_back("temb.bias", static_cast<std::size_t>(ly.width));
    p.emplace_back("conv2.weight", ly.c2.weight_count());
    p.emplace_back("conv2.bias", static_cast<std::size_t>(ly.c2.out_ch));
    p.emplace_back("conv3.weight", ly.c3.weight_count());
    p.emplace_back("conv3.bias", static_cast<std::size_t>(ly.c3.out_ch));
    return p;
}

Shape param_dims(const Layers& ly, int index) {
    const auto c = static_cast<std::size_t>(ly.width);
    const auto e = static_cast<std::size_t>(ly.embed);
    switch (index) {
        case kConv1W: return {c, 1, 3, 3};
        case kConv1B: return {c};
        case kTembW: return {c, e};
        case kTembB: return {c};
        case kConv2W: return {c, c, 3, 3};
        case kConv2B: return {c};
        case kConv3W: return {1, c, 3, 3};
        case kConv3B: return {1};
        default: throw std::logic_error("bad param index");
    }
}

struct Acts {
    std::vector<double> emb, temb_out, z1c, a1, z2, a2, y;
};

void forward(const std::vector<nn::Param>& p, const Layers& ly, const double* x,
             int h, int w, int t, Acts& a) {
    const std::size_t n = static_cast<std::size_t>(h) * w;
    const std::size_t cn = static_cast<std::size_t>(ly.width) * n;
    a.emb = nn::sinusoidal_embedding(t, ly.embed);
    a.temb_out.resize(ly.width);
    a.z1c.resize(cn);
    a.a1.resize(cn);
    a.z2.resize(cn);
    a.a2.resize(cn);
    a.y.resize(n);
    nn::conv2d_forward(x, h, w, ly.c1, p[kConv1W].value.data(), p[kConv1B].value.data(), a.z1c.data());
    nn::linear_forward(a.emb.data(), ly.embed, ly.width, p[kTembW].value.data(),
                       p[kTembB].value.data(), a.temb_out.data());
    for (int c = 0; c < ly.width; ++c) {
        const double b = a.temb_out[c];
        double* z = a.z1c.data() + static_cast<std::size_t>(c) * n;
        for (std::size_t i = 0; i < n; ++i) z[i] += b;
    }
    nn::relu_forward(a.z1c.data(), cn, a.a1.data());
    nn::conv2d_forward(a.a1.data(), h, w, ly.c2, p[kConv2W].value.data(), p[kConv2B].value.data(), a.z2.data());
    nn::relu_forward(a.z2.data(), cn, a.a2.data());
    nn::conv2d_forward(a.a2.data(), h, w, ly.c3, p[kConv3W].value.data(), p[kConv3B].value.data(), a.y.data());
}

// Accumulates parameter gradients for one sample into grads (same layout as params).
void backward(const std::vector<nn::Param>& p, const Layers& ly, const double* x,
              int h, int w, const Acts& a, const std::vector<double>& gy,
              std::vector<std::vector<double>>& grads) {
    const std::size_t n = static_cast<std::size_t>(h) * w;
    const std::size_t cn = static_cast<std::size_t>(ly.width) * n;
    std::vector<double> ga2(cn, 0.0), gz2(cn), ga1(cn, 0.0), gz1c(cn);
    nn::conv2d_backward(a.a2.data(), h, w, ly.c3, p[kConv3W].value.data(), gy.data(),
                        ga2.data(), grads[kConv3W].data(), grads[kConv3B].data());
    nn::relu_backward(a.z2.data(), ga2.data(), cn, gz2.data());
    nn::conv2d_backward(a.a1.data(), h, w, ly.c2, p[kConv2W].value.data(), gz2.data(),
                        ga1.data(), grads[kConv2W].data(), grads[kConv2B].data());
    nn::relu_backward(a.z1c.data(), ga1.data(), cn, gz1c.data());
    nn::conv2d_backward(x, h, w, ly.c1, p[kConv1W].value.data(), gz1c.data(),
                        nullptr, grads[kConv1W].data(), grads[kConv1B].data());
    for (int c = 0; c < ly.width; ++c) {
        double acc = 0.0;
        const double* g = gz1c.data() + static_cast<std::size_t>(c) * n;
        for (std::size_t i = 0; i < n; ++i) acc += g[i];
        grads[kTembB][static_cast<std::size_t>(c)] += acc;
        for (int e = 0; e < ly.embed; ++e)
            grads[kTembW][static_cast<std::size_t>(c) * ly.embed + e] += acc * a.emb[e];
    }
}

}  // namespace

TrainablePredictor::TrainablePredictor(const PredictorArch& arch, std::uint64_t seed)
    : arch_(arch), seed_(seed) {
    check_arch(arch);
    const Layers ly = make_layers(arch);
    params_ = make_params(ly);
    Rng rng(seed);
    nn::he_init(params_[kConv1W], static_cast<std::size_t>(ly.c1.in_ch) * 9, rng);
    nn::he_init(params_[kTembW], static_cast<std::size_t>(ly.embed), rng);
    nn::he_init(params_[kConv2W], static_cast<std::size_t>(ly.c2.in_ch) * 9, rng);
    nn::he_init(params_[kConv3W], static_cast<std::size_t>(ly.c3.in_ch) * 9, rng);
    round_params_to_f32();
}

Tensor TrainablePredictor::predict(const Tensor& x, int t, const NoiseSchedule& schedule) const {
    if (x.shape().size() != 2) throw std::invalid_argument("trainable predictor expects a 2-D tensor");
    schedule.alpha_bar(t);  // range check
    const int h = static_cast<int>(x.rows()), w = static_cast<int>(x.cols());
    Acts a;
    forward(params_, make_layers(arch_), x.data(), h, w, t, a);
    return Tensor(x.shape(), a.y);
}

std::string TrainablePredictor::id() const {
    std::uint64_t hash = fnv1a("trainable", 9);
    for (const auto& p : params_) {
        hash = fnv1a(p.name.data(), p.name.size(), hash);
        hash = fnv1a(p.value.data(), p.value.size() * sizeof(double), hash);
    }
    return "trainable:" + to_hex(hash);
}

void TrainablePredictor::set_training_record(long long steps, double loss) {
    trained_steps_ = steps;
    final_loss_ = loss;
}

void TrainablePredictor::round_params_to_f32() {
    for (auto& p : params_)
        for (double& v : p.value) v = static_cast<double>(static_cast<float>(v));
}

void TrainablePredictor::save(const std::filesystem::path& dir) const {
    namespace fs = std::filesystem;
    const Layers ly = make_layers(arch_);
    fs::create_directories(dir / "params");
    for (int i = 0; i < kParamCount; ++i) {
        const auto& p = params_[static_cast<std::size_t>(i)];
        std::vector<float> vals(p.value.begin(), p.value.end());
        std::ostringstream os(std::ios::binary);
        write_container(os, param_dims(ly, i), vals);
        const std::string bytes = os.str();
        write_file_atomic(dir / "params" / (p.name + ".dnft"), bytes.data(), bytes.size());
    }
    nlohmann::json manifest{
        {"kind", "trainable-predictor"},
        {"width", arch_.width},
        {"embed_dim", arch_.embed_dim},
        {"seed", seed_},
        {"steps", trained_steps_},
        {"final_loss", final_loss_},
    };
    write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

TrainablePredictor TrainablePredictor::load(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw IoError("cannot open predictor manifest in " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(mf);
    if (manifest.at("kind").get<std::string>() != "trainable-predictor")
        throw IoError("not a trainable-predictor directory: " + dir.string());
    PredictorArch arch{manifest.at("width").get<int>(), manifest.at("embed_dim").get<int>()};
    TrainablePredictor pred(arch, manifest.at("seed").get<std::uint64_t>());
    pred.trained_steps_ = manifest.at("steps").get<long long>();
    pred.final_loss_ = manifest.at("final_loss").get<double>();
    for (auto& p : pred.params_) {
        std::ifstream f(dir / "params" / (p.name + ".dnft"), std::ios::binary);
        if (!f) throw IoError("missing parameter file " + p.name);
        F32Payload payload = read_container(f);
        if (payload.values.size() != p.value.size())
            throw IoError("parameter size mismatch for " + p.name);
        for (std::size_t i = 0; i < p.value.size(); ++i)
            p.value[i] = static_cast<double>(payload.values[i]);
    }
    return pred;
}

TrainablePredictor train_predictor(const std::vector<Tensor>& dataset,
                                   const NoiseSchedule& schedule,
                                   const PredictorTrainConfig& config) {
    if (dataset.empty()) throw std::invalid_argument("training dataset is empty");
    for (const auto& img : dataset)
        if (img.shape().size() != 2) throw std::invalid_argument("training images must be 2-D tensors");
    if (config.steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (config.batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (config.steps > 0 && !(config.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");

    TrainablePredictor pred(config.arch, config.seed);
    if (config.steps == 0) return pred;

    const Layers ly = make_layers(config.arch);
    auto& params = pred.mutable_params();
    nn::Adam opt;
    Rng rng(derive_seed(config.seed, 1));
    const int batch = config.batch;

    struct Item {
        std::size_t img;
        int t;
        Tensor eps;
        Tensor xt;
    };

    std::vector<std::vector<std::vector<double>>> sample_grads(
        static_cast<std::size_t>(batch));
    for (auto& g : sample_grads) {
        g.resize(kParamCount);
        for (int i = 0; i < kParamCount; ++i) g[static_cast<std::size_t>(i)].resize(params[static_cast<std::size_t>(i)].value.size());
    }
    std::vector<double> losses(static_cast<std::size_t>(batch));

    double loss = 0.0;
    for (long long step = 0; step < config.steps; ++step) {
        // Batch randomness is drawn serially so worker count cannot change it.
        std::vector<Item> items;
        items.reserve(static_cast<std::size_t>(batch));
        for (int b = 0; b < batch; ++b) {
            Item it;
            it.img = rng.below(dataset.size());
            it.t = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(schedule.total_steps)));
            it.eps = rng.normal_tensor(dataset[it.img].shape());
            const double ab = schedule.alpha_bar(it.t);
            const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
            it.xt = Tensor(it.eps.shape());
            const auto& x0 = dataset[it.img];
            for (std::size_t i = 0; i < it.xt.size(); ++i)
                it.xt.data()[i] = sa * x0.data()[i] + sb * it.eps.data()[i];
            items.push_back(std::move(it));
        }

        parallel::parallel_for(static_cast<std::size_t>(batch), [&](std::size_t b) {
            const Item& it = items[b];
            const int h = static_cast<int>(it.xt.rows()), w = static_cast<int>(it.xt.cols());
            const std::size_t n = it.xt.size();
            Acts a;
            forward(params, ly, it.xt.data(), h, w, it.t, a);
            auto& g = sample_grads[b];
            for (auto& gp : g) std::fill(gp.begin(), gp.end(), 0.0);
            std::vector<double> gy(n);
            double l = 0.0;
            const double scale = 1.0 / (static_cast<double>(batch) * static_cast<double>(n));
            for (std::size_t i = 0; i < n; ++i) {
                const double d = a.y[i] - it.eps.data()[i];
                l += d * d * scale;
                gy[i] = 2.0 * d * scale;
            }
            losses[b] = l;
            backward(params, ly, it.xt.data(), h, w, a, gy, g);
        });

        loss = 0.0;
        for (int b = 0; b < batch; ++b) loss += losses[static_cast<std::size_t>(b)];
        if (!std::isfinite(loss))
            throw TrainingError("non-finite loss at step " + std::to_string(step));
        for (int pi = 0; pi < kParamCount; ++pi) {
            auto& grad = params[static_cast<std::size_t>(pi)].grad;
            std::fill(grad.begin(), grad.end(), 0.0);
            for (int b = 0; b < batch; ++b) {
                const auto& g = sample_grads[static_cast<std::size_t>(b)][static_cast<std::size_t>(pi)];
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
            }
        }
        opt.step(params, config.lr);
    }

    pred.set_training_record(config.steps, loss);
    pred.round_params_to_f32();
    return pred;
}

}  // namespace dnf
