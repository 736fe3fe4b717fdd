#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "json.hpp"

#include "dnf/detector.hpp"
#include "dnf/errors.hpp"
#include "dnf/parallel.hpp"
#include "dnf/rng.hpp"
#include "dnf/tensor.hpp"
#include "helpers.hpp"

using namespace dnf;

namespace {

// Quadratic-time reference: walk ranks in stable descending-score order and
// recount the positives in every prefix from scratch.
double ap_brute_force(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t total_pos = 0;
    for (int l : labels) total_pos += l == 1 ? 1u : 0u;
    double ap = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (labels[order[k]] != 1) continue;
        std::size_t tp = 0;
        for (std::size_t j = 0; j <= k; ++j) tp += labels[order[j]] == 1 ? 1u : 0u;
        const double precision = static_cast<double>(tp) / static_cast<double>(k + 1);
        ap += precision / static_cast<double>(total_pos);
    }
    return ap;
}

// Two Gaussian blobs separated along every pixel; labels 0 / 1.
struct Blobs {
    std::vector<Tensor> features;
    std::vector<int> labels;
};

Blobs make_blobs(Rng& rng, std::size_t per_class, double shift, double sd,
                 std::size_t res = 8) {
    Blobs b;
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        const int label = i < per_class ? 0 : 1;
        Tensor t = rng.normal_tensor({res, res});
        t *= sd;
        t += Tensor::full({res, res}, label == 0 ? -shift : shift);
        b.features.push_back(std::move(t));
        b.labels.push_back(label);
    }
    return b;
}

DetectorTrainConfig linear_config(std::uint64_t seed) {
    DetectorTrainConfig cfg;
    cfg.arch = DetectorArch::kLinear;
    cfg.lr0 = 0.1;
    cfg.batch = 16;
    cfg.fixed_epochs = 60;
    cfg.seed = seed;
    return cfg;
}

bool params_equal(const DetectorModel& a, const DetectorModel& b) {
    if (a.params.size() != b.params.size()) return false;
    for (std::size_t i = 0; i < a.params.size(); ++i)
        if (a.params[i].value != b.params[i].value) return false;
    return true;
}

double max_param_diff(const DetectorModel& a, const DetectorModel& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.params.size(); ++i)
        for (std::size_t j = 0; j < a.params[i].value.size(); ++j)
            m = std::max(m, std::abs(a.params[i].value[j] - b.params[i].value[j]));
    return m;
}

}  // namespace

TEST_CASE("detector arch names round-trip") {
    CHECK(to_string(DetectorArch::kLinear) == "linear");
    CHECK(to_string(DetectorArch::kResnet) == "resnet");
    CHECK(detector_arch_from_string("linear") == DetectorArch::kLinear);
    CHECK(detector_arch_from_string("resnet") == DetectorArch::kResnet);
    CHECK_THROWS_AS(detector_arch_from_string("mlp"), std::invalid_argument);
}

TEST_CASE("average precision hand cases") {
    CHECK(average_precision({0.9, 0.1}, {1, 0}) == 1.0);
    CHECK(average_precision({0.1, 0.9}, {0, 1}) == 1.0);
    // Ranks 1 and 3 are positive: AP = (1/1 + 2/3) / 2.
    CHECK(average_precision({0.9, 0.8, 0.7}, {1, 0, 1}) ==
          doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    // Positives ranked last: AP = (1/3 + 2/4) / 2.
    CHECK(average_precision({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) ==
          doctest::Approx(5.0 / 12.0).epsilon(1e-12));
    // Full tie keeps input order, so this matches the 0.9/0.8/0.7 ranking.
    CHECK(average_precision({0.5, 0.5, 0.5}, {1, 0, 1}) ==
          doctest::Approx(5.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("average precision equals brute-force enumeration") {
    Rng rng(2024);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t n = 2 + rng.below(11);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool both = false;
        while (!both) {
            for (std::size_t i = 0; i < n; ++i) {
                // Coarse score grid forces frequent ties.
                scores[i] = static_cast<double>(rng.below(8)) / 8.0;
                labels[i] = static_cast<int>(rng.below(2));
            }
            bool pos = false, neg = false;
            for (int l : labels) (l == 1 ? pos : neg) = true;
            both = pos && neg;
        }
        CHECK(average_precision(scores, labels) == ap_brute_force(scores, labels));
    }
}

TEST_CASE("average precision is invariant under order-preserving transforms") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(30);
        std::vector<double> scores(n), warped(n);
        std::vector<int> labels(n);
        labels[0] = 0;
        labels[1] = 1;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = static_cast<double>(rng.below(16)) / 16.0;
            if (i > 1) labels[i] = static_cast<int>(rng.below(2));
            const double s = scores[i];
            warped[i] = std::atan(3.0 * s) + s * s * s;
        }
        CHECK(average_precision(scores, labels) == average_precision(warped, labels));
    }
}

TEST_CASE("metric input validation") {
    CHECK_THROWS_AS(average_precision({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(average_precision({0.5}, {1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(average_precision({0.5, 0.6}, {1, 1}), MetricError);
    CHECK_THROWS_AS(average_precision({0.5, 0.6}, {0, 0}), MetricError);
    CHECK_THROWS_AS(accuracy({}, {}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(accuracy({0.5}, {1, 0}, 0.5), std::invalid_argument);
}

TEST_CASE("accuracy hand cases") {
    CHECK(accuracy({0.6, 0.4}, {1, 0}, 0.5) == 1.0);
    CHECK(accuracy({0.6, 0.4}, {0, 1}, 0.5) == 0.0);
    CHECK(accuracy({0.9, 0.8, 0.2, 0.1}, {1, 0, 1, 0}, 0.5) == 0.5);
    // A score equal to the threshold predicts "generated".
    CHECK(accuracy({0.5}, {1}, 0.5) == 1.0);
    CHECK(accuracy({0.5}, {0}, 0.5) == 0.0);
}

TEST_CASE("separable blobs train to perfect accuracy") {
    Rng rng(101);
    const Blobs train = make_blobs(rng, 24, 0.6, 0.2);
    const Blobs val = make_blobs(rng, 8, 0.6, 0.2);
    const DetectorModel model =
        train_detector(train.features, train.labels, val.features, val.labels, linear_config(5));

    CHECK(model.threshold == 0.5);
    CHECK(model.epochs == 60);
    const EvalReport on_train = evaluate(model, train.features, train.labels);
    const EvalReport on_val = evaluate(model, val.features, val.labels);
    CHECK(on_train.accuracy == 1.0);
    CHECK(on_val.accuracy == 1.0);
    CHECK(on_val.average_precision == 1.0);

    SUBCASE("the residual net fits the same data") {
        DetectorTrainConfig cfg;
        cfg.arch = DetectorArch::kResnet;
        cfg.width = 4;
        cfg.lr0 = 3e-3;
        cfg.batch = 16;
        cfg.fixed_epochs = 12;
        cfg.seed = 6;
        const DetectorModel net =
            train_detector(train.features, train.labels, val.features, val.labels, cfg);
        CHECK(evaluate(net, val.features, val.labels).accuracy >= 0.9);
    }
}

TEST_CASE("permuted labels leave validation near chance") {
    Rng rng(202);
    Blobs train = make_blobs(rng, 24, 0.6, 0.2);
    Blobs val = make_blobs(rng, 20, 0.6, 0.2);
    rng.shuffle(train.labels);
    rng.shuffle(val.labels);
    const DetectorModel model =
        train_detector(train.features, train.labels, val.features, val.labels, linear_config(7));
    const double acc = evaluate(model, val.features, val.labels).accuracy;
    CHECK(acc >= 0.2);
    CHECK(acc <= 0.8);
}

TEST_CASE("evaluate reports counts, threshold decisions, and per-item scores") {
    Rng rng(303);
    const Blobs train = make_blobs(rng, 16, 0.6, 0.2);
    const Blobs val = make_blobs(rng, 4, 0.6, 0.2);
    const DetectorModel model =
        train_detector(train.features, train.labels, val.features, val.labels, linear_config(9));

    std::vector<Tensor> probe(val.features.begin(), val.features.begin() + 5);
    const std::vector<int> labels{0, 0, 0, 1, 1};
    const EvalReport r = evaluate(model, probe, labels);
    CHECK(r.count_real == 3);
    CHECK(r.count_generated == 2);
    CHECK(r.labels == labels);
    REQUIRE(r.scores.size() == probe.size());
    for (std::size_t i = 0; i < probe.size(); ++i)
        CHECK(r.scores[i] == predict_score(model, probe[i]));
    CHECK(r.accuracy == accuracy(r.scores, labels, model.threshold));
    CHECK(r.average_precision == average_precision(r.scores, labels));

    CHECK_THROWS_AS(evaluate(model, {}, {}), std::invalid_argument);
    CHECK_THROWS_AS(predict_logit(model, Tensor({4, 4})), std::invalid_argument);
}

TEST_CASE("training is bit-reproducible and seed sensitive") {
    Rng rng(404);
    const Blobs train = make_blobs(rng, 12, 0.5, 0.3);
    const Blobs val = make_blobs(rng, 4, 0.5, 0.3);
    DetectorTrainConfig cfg;
    cfg.arch = DetectorArch::kResnet;
    cfg.width = 2;
    cfg.lr0 = 1e-3;
    cfg.batch = 8;
    cfg.fixed_epochs = 4;
    cfg.seed = 11;

    parallel::set_workers(1);
    const DetectorModel a =
        train_detector(train.features, train.labels, val.features, val.labels, cfg);
    parallel::set_workers(8);
    const DetectorModel b =
        train_detector(train.features, train.labels, val.features, val.labels, cfg);
    parallel::set_workers(0);
    const DetectorModel c =
        train_detector(train.features, train.labels, val.features, val.labels, cfg);
    CHECK(params_equal(a, b));
    CHECK(params_equal(a, c));

    cfg.seed = 12;
    const DetectorModel d =
        train_detector(train.features, train.labels, val.features, val.labels, cfg);
    CHECK(!params_equal(a, d));
}

TEST_CASE("duplicating the training set with a doubled batch changes nothing") {
    Rng rng(505);
    const Blobs train = make_blobs(rng, 10, 0.5, 0.3);
    const Blobs val = make_blobs(rng, 4, 0.5, 0.3);

    DetectorTrainConfig cfg = linear_config(13);
    cfg.shuffle = false;
    cfg.flip_prob = 0.0;
    cfg.fixed_epochs = 20;
    cfg.batch = static_cast<int>(train.features.size());
    const DetectorModel once =
        train_detector(train.features, train.labels, val.features, val.labels, cfg);

    std::vector<Tensor> doubled = train.features;
    doubled.insert(doubled.end(), train.features.begin(), train.features.end());
    std::vector<int> doubled_labels = train.labels;
    doubled_labels.insert(doubled_labels.end(), train.labels.begin(), train.labels.end());
    cfg.batch = static_cast<int>(doubled.size());
    const DetectorModel twice =
        train_detector(doubled, doubled_labels, val.features, val.labels, cfg);

    CHECK(max_param_diff(once, twice) <= 1e-6);
}

TEST_CASE("plateau schedule divides the rate and stops at the floor") {
    // Identical validation features pin validation accuracy at exactly 0.5,
    // so the first epoch improves on -1 and every later epoch plateaus.
    Rng rng(606);
    const Blobs train = make_blobs(rng, 8, 0.5, 0.3);
    std::vector<Tensor> val_features(6, Tensor::full({8, 8}, 0.1));
    const std::vector<int> val_labels{0, 0, 0, 1, 1, 1};

    DetectorTrainConfig cfg;
    cfg.arch = DetectorArch::kLinear;
    cfg.lr0 = 1e-3;
    cfg.lr_min = 1e-5;
    cfg.lr_drop_factor = 10.0;
    cfg.plateau_patience = 2;
    cfg.batch = 8;
    cfg.seed = 15;
    const DetectorModel model =
        train_detector(train.features, train.labels, val_features, val_labels, cfg);

    // Epoch 0 improves; epochs 1-2 plateau and drop to lr0/10; epochs 3-4
    // plateau again and the next division reaches the floor, ending training.
    const double lr1 = cfg.lr0 / cfg.lr_drop_factor;
    CHECK(model.epochs == 5);
    CHECK(model.lr_history == std::vector<double>{cfg.lr0, cfg.lr0, cfg.lr0, lr1, lr1});
    CHECK(model.final_lr == lr1);

    SUBCASE("max_epochs caps the schedule") {
        cfg.max_epochs = 3;
        cfg.plateau_patience = 50;
        const DetectorModel capped =
            train_detector(train.features, train.labels, val_features, val_labels, cfg);
        CHECK(capped.epochs == 3);
        CHECK(capped.lr_history == std::vector<double>(3, cfg.lr0));
    }
}

TEST_CASE("training input validation") {
    Rng rng(707);
    const Blobs ok = make_blobs(rng, 4, 0.5, 0.3);
    DetectorTrainConfig cfg = linear_config(1);
    cfg.fixed_epochs = 1;

    CHECK_THROWS_AS(train_detector({}, {}, ok.features, ok.labels, cfg), std::invalid_argument);
    CHECK_THROWS_AS(train_detector(ok.features, {0, 1}, ok.features, ok.labels, cfg),
                    std::invalid_argument);

    const std::vector<int> one_class(ok.labels.size(), 1);
    CHECK_THROWS_AS(train_detector(ok.features, one_class, ok.features, ok.labels, cfg),
                    std::invalid_argument);
    CHECK_THROWS_AS(train_detector(ok.features, ok.labels, ok.features, one_class, cfg),
                    std::invalid_argument);

    std::vector<int> bad_label = ok.labels;
    bad_label[0] = 2;
    CHECK_THROWS_AS(train_detector(ok.features, bad_label, ok.features, ok.labels, cfg),
                    std::invalid_argument);

    auto bad_cfg = cfg;
    bad_cfg.width = 0;
    CHECK_THROWS_AS(train_detector(ok.features, ok.labels, ok.features, ok.labels, bad_cfg),
                    std::invalid_argument);
    bad_cfg.width = 33;
    CHECK_THROWS_AS(train_detector(ok.features, ok.labels, ok.features, ok.labels, bad_cfg),
                    std::invalid_argument);
    bad_cfg = cfg;
    bad_cfg.batch = 0;
    CHECK_THROWS_AS(train_detector(ok.features, ok.labels, ok.features, ok.labels, bad_cfg),
                    std::invalid_argument);
    bad_cfg = cfg;
    bad_cfg.lr0 = 0.0;
    CHECK_THROWS_AS(train_detector(ok.features, ok.labels, ok.features, ok.labels, bad_cfg),
                    std::invalid_argument);

    std::vector<Tensor> ragged = ok.features;
    ragged[1] = Tensor({4, 4});
    CHECK_THROWS_AS(train_detector(ragged, ok.labels, ok.features, ok.labels, cfg),
                    std::invalid_argument);
    std::vector<Tensor> rect(ok.features.size(), Tensor({4, 8}));
    CHECK_THROWS_AS(train_detector(rect, ok.labels, ok.features, ok.labels, cfg),
                    std::invalid_argument);
}

TEST_CASE("detector save/load round-trips bitwise") {
    testutil::TempDir dir;
    Rng rng(808);
    const Blobs train = make_blobs(rng, 8, 0.5, 0.3);
    const Blobs val = make_blobs(rng, 4, 0.5, 0.3);
    DetectorTrainConfig cfg;
    cfg.arch = DetectorArch::kResnet;
    cfg.width = 3;
    cfg.batch = 8;
    cfg.fixed_epochs = 3;
    cfg.seed = 21;
    const DetectorModel model =
        train_detector(train.features, train.labels, val.features, val.labels, cfg);

    save_detector(model, dir / "det");
    const DetectorModel back = load_detector(dir / "det");
    CHECK(back.arch == model.arch);
    CHECK(back.width == model.width);
    CHECK(back.input_res == model.input_res);
    CHECK(back.threshold == model.threshold);
    CHECK(back.seed == model.seed);
    CHECK(params_equal(model, back));
    for (std::size_t i = 0; i < model.norm_mean.size(); ++i) {
        CHECK(back.norm_mean[i] == model.norm_mean[i]);
        CHECK(back.norm_std[i] == model.norm_std[i]);
    }
    for (const auto& probe : val.features)
        CHECK(predict_logit(back, probe) == predict_logit(model, probe));

    CHECK_THROWS_AS(load_detector(dir / "nowhere"), IoError);
}

TEST_CASE("eval report serializes every field") {
    EvalReport r;
    r.accuracy = 0.75;
    r.average_precision = 0.5;
    r.count_real = 3;
    r.count_generated = 1;
    r.scores = {0.9, 0.2, 0.4, 0.6};
    r.labels = {1, 0, 0, 1};
    const auto j = nlohmann::json::parse(eval_report_to_json(r));
    CHECK(j.at("accuracy").get<double>() == 0.75);
    CHECK(j.at("average_precision").get<double>() == 0.5);
    CHECK(j.at("count_real").get<std::size_t>() == 3);
    CHECK(j.at("count_generated").get<std::size_t>() == 1);
    CHECK(j.at("scores").get<std::vector<double>>() == r.scores);
    CHECK(j.at("labels").get<std::vector<int>>() == r.labels);
}
