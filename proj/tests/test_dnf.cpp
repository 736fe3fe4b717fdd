#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "json.hpp"

#include "dnf/dnf.hpp"
#include "dnf/errors.hpp"
#include "dnf/image.hpp"
#include "dnf/io.hpp"
#include "dnf/parallel.hpp"
#include "dnf/predictor.hpp"
#include "dnf/rng.hpp"
#include "dnf/schedule.hpp"
#include "helpers.hpp"

using namespace dnf;
namespace fs = std::filesystem;

namespace {

// Forwards to an inner predictor and counts evaluations.
struct CountingPredictor final : NoisePredictor {
    const NoisePredictor* inner;
    mutable std::atomic<long long> calls{0};

    explicit CountingPredictor(const NoisePredictor* p) : inner(p) {}
    Tensor predict(const Tensor& x, int tau, const NoiseSchedule& s) const override {
        ++calls;
        return inner->predict(x, tau, s);
    }
    std::string id() const override { return inner->id(); }
};

// Single-step schedule with abar_1 = 0.75, so sqrt(1 - abar) = 0.5 exactly.
NoiseSchedule quarter_schedule() { return make_linear_schedule(1, 0.25, 0.25); }

ImageU8 patterned_image(int h, int w, int phase) {
    ImageU8 img(h, w, 1);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            img.at(r, c) = static_cast<std::uint8_t>((r * 7 + c * 13 + phase * 31) % 256);
    return img;
}

std::vector<Tensor> random_sequence(Rng& rng, std::size_t n, const Shape& shape) {
    std::vector<Tensor> seq;
    seq.reserve(n);
    for (std::size_t i = 0; i < n; ++i) seq.push_back(rng.normal_tensor(shape));
    return seq;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

ExtractConfig small_config(const NoisePredictor* p, FusionStrategy strategy,
                           const NoiseSchedule& sched, int steps) {
    ExtractConfig cfg;
    cfg.working_resolution = 8;
    cfg.schedule = sched;
    cfg.taus = sample_timesteps(sched.total_steps, steps, TimestepMode::kUniform);
    cfg.predictor = p;
    cfg.strategy = strategy;
    return cfg;
}

// Cache directory contents as name -> file bytes.
std::map<std::string, std::string> dir_snapshot(const fs::path& dir) {
    std::map<std::string, std::string> snap;
    for (const auto& e : fs::directory_iterator(dir))
        snap[e.path().filename().string()] = testutil::slurp(e.path());
    return snap;
}

}  // namespace

TEST_CASE("fusion strategy names round-trip") {
    CHECK(to_string(FusionStrategy::kFirst) == "first");
    CHECK(to_string(FusionStrategy::kAvg) == "avg");
    CHECK(to_string(FusionStrategy::kLast) == "last");
    for (const char* name : {"first", "avg", "last"})
        CHECK(to_string(fusion_strategy_from_string(name)) == name);
    CHECK_THROWS_AS(fusion_strategy_from_string("median"), std::invalid_argument);
    CHECK_THROWS_AS(fusion_strategy_from_string(""), std::invalid_argument);
}

TEST_CASE("fuse selects endpoints and averages elementwise") {
    std::vector<Tensor> seq{Tensor::full({2, 2}, 1.0), Tensor::full({2, 2}, 2.0),
                            Tensor::full({2, 2}, 6.0)};
    CHECK(bitwise_equal(fuse(seq, FusionStrategy::kFirst), seq[0]));
    CHECK(bitwise_equal(fuse(seq, FusionStrategy::kLast), seq[2]));
    const Tensor avg = fuse(seq, FusionStrategy::kAvg);
    for (std::size_t i = 0; i < avg.size(); ++i) CHECK(avg[i] == doctest::Approx(3.0));

    SUBCASE("scalar sequence") {
        std::vector<Tensor> scalars{Tensor::scalar(1.0), Tensor::scalar(3.0)};
        CHECK(fuse(scalars, FusionStrategy::kAvg)[0] == 2.0);
        CHECK(fuse(scalars, FusionStrategy::kFirst)[0] == 1.0);
        CHECK(fuse(scalars, FusionStrategy::kLast)[0] == 3.0);
    }
    SUBCASE("single element returns it under every strategy") {
        Rng rng(3);
        std::vector<Tensor> one{rng.normal_tensor({3, 5})};
        for (auto s : {FusionStrategy::kFirst, FusionStrategy::kAvg, FusionStrategy::kLast})
            CHECK(bitwise_equal(fuse(one, s), one[0]));
    }
}

TEST_CASE("fuse input validation") {
    CHECK_THROWS_AS(fuse({}, FusionStrategy::kFirst), std::invalid_argument);
    CHECK_THROWS_AS(fuse({}, FusionStrategy::kAvg), std::invalid_argument);
    std::vector<Tensor> mixed{Tensor::full({2, 2}, 1.0), Tensor::full({3, 2}, 1.0)};
    CHECK_THROWS_AS(fuse(mixed, FusionStrategy::kAvg), std::invalid_argument);
}

TEST_CASE("averaging is linear in the sequence") {
    Rng rng(11);
    const std::size_t n = 6;
    const Shape shape{4, 4};
    const auto a = random_sequence(rng, n, shape);
    const auto b = random_sequence(rng, n, shape);
    const double ka = 0.7, kb = -1.3;

    std::vector<Tensor> mixed;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor m = a[i];
        m *= ka;
        Tensor bs = b[i];
        bs *= kb;
        m += bs;
        mixed.push_back(std::move(m));
    }
    Tensor want = fuse(a, FusionStrategy::kAvg);
    want *= ka;
    Tensor wb = fuse(b, FusionStrategy::kAvg);
    wb *= kb;
    want += wb;
    CHECK(testutil::max_abs_diff(fuse(mixed, FusionStrategy::kAvg), want) <= 1e-10);
}

TEST_CASE("first-element fusion ignores every later entry") {
    Rng rng(13);
    std::vector<Tensor> seq{rng.normal_tensor({5, 5})};
    const Tensor head = seq[0];
    seq.push_back(Tensor::full({5, 5}, 1e18));
    seq.push_back(Tensor::full({5, 5}, -1e18));
    CHECK(bitwise_equal(fuse(seq, FusionStrategy::kFirst), head));
}

TEST_CASE("predictor call counts per strategy") {
    const NoiseSchedule sched = make_linear_schedule(1000, 1e-4, 0.02);
    const AnalyticGaussianPredictor base(0.0, 1.0);
    const CountingPredictor counted(&base);
    const ImageU8 img = patterned_image(8, 8, 0);

    // One evaluation suffices for the first-element strategy; the other
    // strategies walk every transition of the timestep sequence. A request
    // for 6 steps yields 7 grid points, hence 6 transitions.
    auto cfg = small_config(&counted, FusionStrategy::kFirst, sched, 6);
    REQUIRE(cfg.taus.taus.size() == 7);
    (void)extract_dnf(img, cfg);
    CHECK(counted.calls.load() == 1);

    counted.calls = 0;
    cfg.strategy = FusionStrategy::kAvg;
    (void)extract_dnf(img, cfg);
    CHECK(counted.calls.load() == 6);

    counted.calls = 0;
    cfg.strategy = FusionStrategy::kLast;
    (void)extract_dnf(img, cfg);
    CHECK(counted.calls.load() == 6);
}

TEST_CASE("hand-checkable extractions") {
    SUBCASE("constant predictor fills the feature with its value") {
        const ConstantPredictor p(0.25);
        const auto cfg = small_config(&p, FusionStrategy::kFirst, quarter_schedule(), 1);
        const DnfFeature f = extract_dnf(patterned_image(16, 16, 2), cfg);
        CHECK(f.values.shape() == Shape{8, 8});
        for (std::size_t i = 0; i < f.values.size(); ++i) CHECK(f.values[i] == 0.25);
    }
    SUBCASE("zero predictor gives a zero feature") {
        const ConstantPredictor p(0.0);
        const auto cfg = small_config(&p, FusionStrategy::kFirst, quarter_schedule(), 1);
        const DnfFeature f = extract_dnf(patterned_image(16, 16, 3), cfg);
        for (std::size_t i = 0; i < f.values.size(); ++i) CHECK(f.values[i] == 0.0);
    }
    SUBCASE("saturated images hit exact analytic values") {
        // 255 maps to +1 and 0 to -1; with abar = 0.75 and a unit Gaussian
        // posterior the predicted noise is sqrt(1 - abar) * x = +-0.5.
        const AnalyticGaussianPredictor p(0.0, 1.0);
        const auto cfg = small_config(&p, FusionStrategy::kFirst, quarter_schedule(), 1);
        const DnfFeature bright = extract_dnf(testutil::gray_image(8, 8, 255), cfg);
        const DnfFeature dark = extract_dnf(testutil::gray_image(8, 8, 0), cfg);
        for (std::size_t i = 0; i < bright.values.size(); ++i) {
            CHECK(bright.values[i] == 0.5);
            CHECK(dark.values[i] == -0.5);
        }
    }
    SUBCASE("source images are resampled to the working resolution") {
        const ConstantPredictor p(1.0);
        auto cfg = small_config(&p, FusionStrategy::kFirst, quarter_schedule(), 1);
        cfg.working_resolution = 12;
        const DnfFeature f = extract_dnf(patterned_image(30, 17, 4), cfg);
        CHECK(f.values.shape() == Shape{12, 12});
    }
}

TEST_CASE("provenance records the full extraction recipe") {
    const NoiseSchedule sched = make_linear_schedule(1000, 1e-4, 0.02);
    const AnalyticGaussianPredictor p(0.3, 1.5);
    const auto cfg = small_config(&p, FusionStrategy::kAvg, sched, 7);
    const ImageU8 img = patterned_image(8, 8, 5);
    const DnfFeature f = extract_dnf(img, cfg);

    CHECK(f.provenance.predictor_id == p.id());
    CHECK(f.provenance.total_steps == sched.total_steps);
    CHECK(f.provenance.beta_start == sched.beta_start);
    CHECK(f.provenance.beta_end == sched.beta_end);
    CHECK(f.provenance.taus == cfg.taus.taus);
    CHECK(f.provenance.strategy == "avg");
    CHECK(f.provenance.content_hash == to_hex(hash_image(img)));
}

TEST_CASE("config hash tracks every extraction input") {
    const NoiseSchedule sched = make_linear_schedule(1000, 1e-4, 0.02);
    const AnalyticGaussianPredictor p(0.0, 1.0);
    const AnalyticGaussianPredictor other(0.1, 1.0);
    const auto base = small_config(&p, FusionStrategy::kFirst, sched, 6);
    const std::uint64_t h = config_hash(base);

    auto same = base;
    CHECK(config_hash(same) == h);

    auto v1 = base;
    v1.working_resolution = 16;
    auto v2 = base;
    v2.schedule = make_linear_schedule(500, 1e-4, 0.02);
    auto v3 = base;
    v3.taus = sample_timesteps(sched.total_steps, 5, TimestepMode::kUniform);
    auto v4 = base;
    v4.strategy = FusionStrategy::kAvg;
    auto v5 = base;
    v5.predictor = &other;
    for (const auto* v : {&v1, &v2, &v3, &v4, &v5}) CHECK(config_hash(*v) != h);

    auto v6 = base;
    v6.schedule.beta_end = 0.019;
    CHECK(config_hash(v6) != h);

    ExtractConfig null_pred = base;
    null_pred.predictor = nullptr;
    CHECK_THROWS_AS(config_canonical_json(null_pred), std::invalid_argument);
}

TEST_CASE("cache keys are two fixed-width hex words") {
    CHECK(cache_key(0x1, 0xab) == "0000000000000001-00000000000000ab");
    CHECK(cache_key(0xdeadbeefcafef00dULL, 0xffffffffffffffffULL) ==
          "deadbeefcafef00d-ffffffffffffffff");
}

TEST_CASE("extraction input validation") {
    const AnalyticGaussianPredictor p(0.0, 1.0);
    const NoiseSchedule sched = make_linear_schedule(1000, 1e-4, 0.02);
    const ImageU8 img = patterned_image(8, 8, 6);

    auto cfg = small_config(&p, FusionStrategy::kFirst, sched, 6);
    cfg.predictor = nullptr;
    CHECK_THROWS_AS(extract_dnf(img, cfg), std::invalid_argument);

    cfg = small_config(&p, FusionStrategy::kFirst, sched, 6);
    cfg.working_resolution = 0;
    CHECK_THROWS_AS(extract_dnf(img, cfg), std::invalid_argument);

    cfg = small_config(&p, FusionStrategy::kFirst, sched, 6);
    cfg.taus.taus.clear();
    CHECK_THROWS_AS(extract_dnf(img, cfg), std::invalid_argument);

    // A single timestep cannot support strategies that need a transition.
    cfg = small_config(&p, FusionStrategy::kAvg, sched, 1);
    cfg.taus.taus = {500};
    CHECK_THROWS_AS(extract_dnf(img, cfg), std::invalid_argument);
    cfg.strategy = FusionStrategy::kLast;
    CHECK_THROWS_AS(extract_dnf(img, cfg), std::invalid_argument);
    cfg.strategy = FusionStrategy::kFirst;
    CHECK_NOTHROW(extract_dnf(img, cfg));

    SUBCASE("non-finite predictor output is rejected") {
        const ConstantPredictor bad(std::numeric_limits<double>::infinity());
        const auto inf_cfg = small_config(&bad, FusionStrategy::kFirst, sched, 6);
        CHECK_THROWS_AS(extract_dnf(img, inf_cfg), std::runtime_error);
    }
}

TEST_CASE("batch extraction caches and reuses features") {
    testutil::TempDir dir;
    const fs::path cache = dir / "cache";
    std::vector<fs::path> images;
    for (int i = 0; i < 6; ++i) {
        const fs::path p = dir / ("img" + std::to_string(i) + ".png");
        write_png(p, patterned_image(16, 16, i));
        images.push_back(p);
    }
    const AnalyticGaussianPredictor p(0.0, 1.0);
    const NoiseSchedule sched = make_linear_schedule(1000, 1e-4, 0.02);
    const auto cfg = small_config(&p, FusionStrategy::kAvg, sched, 5);

    const BatchResult cold = extract_batch(images, cfg, cache);
    CHECK(cold.failures == 0);
    for (const auto& item : cold.items) {
        CHECK(item.ok);
        CHECK(item.computed);
        CHECK(!item.key.empty());
        CHECK(fs::exists(feature_path(cache, item.key)));
        CHECK(fs::exists(cache / (item.key + ".json")));
    }
    const auto snapshot = dir_snapshot(cache);
    CHECK(snapshot.size() == 12);  // one tensor plus one sidecar per image

    SUBCASE("warm rerun recomputes nothing and rewrites nothing") {
        const BatchResult warm = extract_batch(images, cfg, cache);
        CHECK(warm.failures == 0);
        for (const auto& item : warm.items) {
            CHECK(item.ok);
            CHECK(!item.computed);
        }
        CHECK(dir_snapshot(cache) == snapshot);
    }
    SUBCASE("an entry missing either file is recomputed") {
        fs::remove(cache / (cold.items[2].key + ".json"));
        fs::remove(feature_path(cache, cold.items[4].key));
        const BatchResult warm = extract_batch(images, cfg, cache);
        CHECK(warm.failures == 0);
        for (std::size_t i = 0; i < warm.items.size(); ++i)
            CHECK(warm.items[i].computed == (i == 2 || i == 4));
        CHECK(dir_snapshot(cache) == snapshot);
    }
    SUBCASE("stored features match a direct extraction bitwise") {
        for (std::size_t i = 0; i < images.size(); ++i) {
            const Tensor stored = load_feature(cache, cold.items[i].key);
            const DnfFeature direct = extract_dnf(read_png(images[i]), cfg);
            CHECK(bitwise_equal(stored, direct.values));
        }
    }
    SUBCASE("sidecar provenance matches the recipe and the key") {
        const auto& item = cold.items[1];
        std::ifstream in(cache / (item.key + ".json"));
        const auto j = nlohmann::json::parse(in);
        const DnfFeature direct = extract_dnf(read_png(images[1]), cfg);
        CHECK(j.at("predictor").get<std::string>() == p.id());
        CHECK(j.at("strategy").get<std::string>() == "avg");
        CHECK(j.at("taus").get<std::vector<int>>() == cfg.taus.taus);
        CHECK(j.at("schedule").at("total_steps").get<int>() == sched.total_steps);
        CHECK(j.at("content_hash").get<std::string>() == direct.provenance.content_hash);
        // Key layout is <content-hash>-<config-hash>.
        CHECK(item.key.substr(0, 16) == direct.provenance.content_hash);
        CHECK(item.key.substr(17) == to_hex(config_hash(cfg)));
    }
}

TEST_CASE("batch output bytes are independent of the worker count") {
    testutil::TempDir dir;
    std::vector<fs::path> images;
    for (int i = 0; i < 10; ++i) {
        const fs::path p = dir / ("img" + std::to_string(i) + ".png");
        write_png(p, patterned_image(16, 16, 40 + i));
        images.push_back(p);
    }
    const AnalyticGaussianPredictor p(0.2, 1.1);
    const NoiseSchedule sched = make_linear_schedule(1000, 1e-4, 0.02);
    const auto cfg = small_config(&p, FusionStrategy::kAvg, sched, 4);

    parallel::set_workers(1);
    const BatchResult serial = extract_batch(images, cfg, dir / "cache1");
    parallel::set_workers(8);
    const BatchResult wide = extract_batch(images, cfg, dir / "cache2");
    parallel::set_workers(0);

    CHECK(serial.failures == 0);
    CHECK(wide.failures == 0);
    for (std::size_t i = 0; i < images.size(); ++i)
        CHECK(serial.items[i].key == wide.items[i].key);
    CHECK(dir_snapshot(dir / "cache1") == dir_snapshot(dir / "cache2"));
}

TEST_CASE("per-item failures do not stop the batch") {
    testutil::TempDir dir;
    const fs::path good0 = dir / "good0.png";
    const fs::path good1 = dir / "good1.png";
    write_png(good0, patterned_image(16, 16, 7));
    write_png(good1, patterned_image(16, 16, 8));
    const fs::path missing = dir / "missing.png";
    const fs::path garbage = dir / "garbage.png";
    write_text_atomic(garbage, "not a png at all");

    const AnalyticGaussianPredictor p(0.0, 1.0);
    const NoiseSchedule sched = make_linear_schedule(1000, 1e-4, 0.02);
    const auto cfg = small_config(&p, FusionStrategy::kFirst, sched, 6);

    const std::vector<fs::path> images{good0, missing, garbage, good1};
    const BatchResult r = extract_batch(images, cfg, dir / "cache");
    CHECK(r.failures == 2);
    CHECK(r.items[0].ok);
    CHECK(r.items[3].ok);
    CHECK(r.items[0].computed);
    CHECK(r.items[3].computed);
    for (std::size_t i : {std::size_t{1}, std::size_t{2}}) {
        CHECK(!r.items[i].ok);
        CHECK(!r.items[i].error.empty());
        CHECK(r.items[i].key.empty());
    }
    // The surviving features are loadable.
    CHECK(load_feature(dir / "cache", r.items[0].key).shape() == Shape{8, 8});
}
