#include <catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <memory>

#include "test_support.hpp"

using namespace pairclf;
using namespace pairclf::model;
using Catch::Approx;

namespace {

struct Fixture {
    data::Dataset ds;
    FeatureBank bank;
    std::vector<IndexedPair> train, val, test;

    Fixture(std::size_t subjects, double signal, std::uint64_t seed, std::size_t hw = 8)
        : ds(testsupport::small_dataset(subjects, signal, seed, hw)), bank(FeatureBank::raw(ds)) {
        const auto pairs = data::generate_pairs(ds.subjects, {}, seed);
        data::SplitConfig c;
        c.seed = seed;
        const auto s = data::split_pairs(pairs, c);
        train = resolve(ds, s.train);
        val = resolve(ds, s.validation);
        test = resolve(ds, s.test);
    }
};

std::vector<IndexedPair> swapped(const std::vector<IndexedPair>& ps) {
    std::vector<IndexedPair> out;
    for (const auto& p : ps) out.push_back({p.right, p.left, 1 - p.target});
    return out;
}

TrainOptions quiet(std::size_t epochs, std::size_t batch = 32) {
    TrainOptions t;
    t.epochs = epochs;
    t.batch_size = batch;
    return t;
}

} // namespace

TEST_CASE("accuracy formula") {
    CHECK(accuracy(ConfusionCounts{5, 5, 0, 0}) == 100.0);
    CHECK(accuracy(ConfusionCounts{0, 0, 3, 7}) == 0.0);
    CHECK(accuracy(ConfusionCounts{3, 2, 2, 3}) == 50.0);
    ConfusionCounts c;
    c.add(1, 1), c.add(1, 0), c.add(0, 0), c.add(0, 1);
    CHECK(c == ConfusionCounts{1, 1, 1, 1});
}

TEST_CASE("evaluation is symmetric under swapping every pair") {
    Fixture f(240, 0.3, 3);
    for (auto v : {Variant::fullface_pair, Variant::landmark_single}) {
        auto cfg = testsupport::toy_config(v, f.ds.feature_shape);
        FeatureBank bank = v == Variant::fullface_pair ? f.bank : make_bank(f.ds, {"nose"});
        auto b = build_model(cfg, 5);
        train(b, bank, f.train, {}, quiet(1));
        const auto a = evaluate(b.model, bank, f.test);
        const auto s = evaluate(b.model, bank, swapped(f.test));
        CHECK(a.counts.correct() == s.counts.correct());
        CHECK(a.accuracy == s.accuracy);
        // Confusion cells trade places: a right-ENT pair becomes a left-ENT pair.
        CHECK(a.counts.tp == s.counts.tn);
        CHECK(a.counts.fn == s.counts.fp);
    }
}

TEST_CASE("symmetrized ties name the lower-indexed subject") {
    Fixture f(120, 0.0, 4);
    auto b = build_model(testsupport::toy_config(Variant::landmark_single, f.ds.feature_shape), 1);
    testsupport::warm_up(b.model, f.bank, f.train);
    testsupport::make_constant(b.model, 0.3f);
    const auto preds = predict_pairs(b.model, f.bank, f.test);
    for (std::size_t i = 0; i < f.test.size(); ++i) {
        CHECK(preds[i].predicted == (f.test[i].left < f.test[i].right ? 0 : 1));
    }
    // A single orientation with p > 0.5 always names the right side.
    const auto one = predict_pairs(b.model, f.bank, f.test, Orientation::as_given);
    for (const auto& p : one) CHECK(p.predicted == 1);
}

TEST_CASE("a constant model on balanced pairs scores near 50%") {
    Fixture f(800, 0.0, 6);
    std::vector<IndexedPair> all = f.train;
    all.insert(all.end(), f.test.begin(), f.test.end());
    auto b = build_model(testsupport::toy_config(Variant::landmark_single, f.ds.feature_shape), 2);
    testsupport::warm_up(b.model, f.bank, all);
    testsupport::make_constant(b.model, 2.0f);
    const auto r = evaluate(b.model, f.bank, all, Orientation::as_given);
    const double n = static_cast<double>(all.size());
    const double sd = 100.0 * std::sqrt(0.25 / n);
    CHECK(std::abs(r.accuracy - 50.0) <= 3 * sd);
    CHECK(r.counts.fn + r.counts.tn == 0);  // always predicts 1
}

TEST_CASE("a wide model memorizes 10 pairs") {
    Fixture f(60, 0.0, 7);
    std::vector<IndexedPair> ten(f.train.begin(), f.train.begin() + 10);
    auto cfg = testsupport::toy_config(Variant::fullface_pair, f.ds.feature_shape, 8, 64);
    cfg.block_dropout = cfg.head_dropout = 0.0;
    auto b = build_model(cfg, 3);
    const auto out = train(b, f.bank, ten, {}, quiet(100, 5));
    CHECK(out.report.curve.back().train_acc == 100.0);
    CHECK(eval_loss(b.model, f.bank, ten).accuracy == 100.0);
}

TEST_CASE("training is bit-identical for equal seeds") {
    Fixture f(120, 1.0, 8);
    auto cfg = testsupport::toy_config(Variant::fullface_pair, f.ds.feature_shape);
    auto a = build_model(cfg, 11), b = build_model(cfg, 11);
    const auto ra = train(a, f.bank, f.train, f.val, quiet(3));
    const auto rb = train(b, f.bank, f.train, f.val, quiet(3));
    auto pa = a.model.params(), pb = b.model.params();
    for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(pa[i]->value == pb[i]->value);
    CHECK(encode_bundle(a) == encode_bundle(b));
    CHECK(ra.report.curve.back().train_loss == rb.report.curve.back().train_loss);

    // Shifting the heap must not change the arithmetic.
    std::vector<std::unique_ptr<char[]>> junk;
    for (std::size_t i = 1; i < 40; ++i) junk.emplace_back(new char[i * 8 + 3]);
    auto c = build_model(cfg, 11);
    train(c, f.bank, f.train, f.val, quiet(3));
    CHECK(encode_bundle(c) == encode_bundle(a));
}

TEST_CASE("planted training curves do not diverge at the last epoch") {
    Fixture f(300, 3.0, 9);
    auto b = build_model(testsupport::toy_config(Variant::fullface_pair, f.ds.feature_shape), 4);
    const auto out = train(b, f.bank, f.train, f.val, quiet(100));
    const auto& last = out.report.curve.back();
    CHECK(last.epoch == 100);
    CHECK(std::abs(last.train_acc - last.val_acc) <= 10.0);
    CHECK(last.val_acc >= 90.0);
}

TEST_CASE("best epoch takes the latest maximum of validation accuracy") {
    Fixture f(200, 3.0, 10);
    auto b = build_model(testsupport::toy_config(Variant::fullface_pair, f.ds.feature_shape), 4);
    const auto out = train(b, f.bank, f.train, f.val, quiet(6));
    double best = -1;
    std::size_t epoch = 0;
    for (const auto& r : out.report.curve)
        if (r.val_acc >= best) best = r.val_acc, epoch = r.epoch;
    CHECK(out.report.best_epoch == epoch);
    CHECK(eval_loss(out.best, f.bank, f.val).accuracy == best);
}

TEST_CASE("training without validation pairs uses the final epoch") {
    Fixture f(100, 1.0, 11);
    auto b = build_model(testsupport::toy_config(Variant::fullface_pair, f.ds.feature_shape), 4);
    const auto out = train(b, f.bank, f.train, {}, quiet(2));
    CHECK(out.report.best_epoch == 2);
    CHECK(std::isnan(out.report.curve.back().val_acc));
    CHECK_THROWS_AS(train(b, f.bank, {}, {}, quiet(1)), ProtocolError);
}

TEST_CASE("feature bank must match the model") {
    Fixture f(60, 1.0, 12);
    auto b = build_model(testsupport::toy_config(Variant::landmark_combined, f.ds.feature_shape), 1);
    CHECK_THROWS_AS(train(b, f.bank, f.train, {}, quiet(1)), ShapeError);
    const auto masked = make_bank(f.ds, {"eyes", "nose", "mouth"});
    CHECK(masked.streams() == 3);
    CHECK_NOTHROW(train(b, masked, f.train, {}, quiet(1)));
}

TEST_CASE("masked banks zero everything outside the region") {
    Fixture f(20, 1.0, 13);
    const auto bank = make_bank(f.ds, {"nose"});
    const auto& rect = f.ds.subjects[0].find_region("nose")->rect;
    const auto& t = bank.at(0, 0);
    const auto& raw = f.ds.features[0];
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x)
            for (std::size_t c = 0; c < 2; ++c) {
                const std::size_t k = (y * 8 + x) * 2 + c;
                REQUIRE(t[k] == (rect.contains(y, x) ? raw[k] : 0.0f));
            }
}

TEST_CASE("repeat_trials summary and parallel determinism") {
    Fixture f(160, 3.0, 14);
    TrialSetup setup;
    setup.model = testsupport::toy_config(Variant::fullface_pair, f.ds.feature_shape);
    setup.train = quiet(2);
    const auto one = repeat_trials(setup, f.bank, f.train, f.val, f.test, 1, 5);
    CHECK_FALSE(one.final_summary.sd.has_value());
    const auto serial = repeat_trials(setup, f.bank, f.train, f.val, f.test, 3, 5, 1);
    const auto para = repeat_trials(setup, f.bank, f.train, f.val, f.test, 3, 5, 3);
    REQUIRE(serial.trials.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(serial.trials[i].report.seed == 5 + i);
        CHECK(serial.trials[i].final_counts == para.trials[i].final_counts);
        CHECK(serial.trials[i].report.curve.back().train_loss == para.trials[i].report.curve.back().train_loss);
    }
    CHECK(serial.trials[0].final_counts == one.trials[0].final_counts);
    CHECK(serial.final_summary.mean == para.final_summary.mean);
    CHECK(serial.final_summary.sd.has_value());
    CHECK_THROWS_AS(repeat_trials(setup, f.bank, f.train, f.val, f.test, 0, 5), ConfigError);
}

TEST_CASE("summary over the published trial list") {
    const std::vector<double> acc{80.30, 78.76, 79.28, 77.89, 79.98, 79.53, 79.52, 80.39, 79.20, 80.24};
    const auto s = stats::mean_sd(acc);
    CHECK(s.mean == Approx(79.51).margin(0.01));
    CHECK(*s.sd == Approx(0.78).margin(0.01));
    // Hand arithmetic: sum 795.09; sum of squared deviations 5.48869.
    CHECK(s.mean == Approx(79.509).margin(1e-9));
    CHECK(*s.sd == Approx(std::sqrt(5.48869 / 9.0)).margin(1e-9));
}

TEST_CASE("curve CSV layout") {
    testsupport::TempDir dir("curve");
    Fixture f(60, 1.0, 15);
    auto b = build_model(testsupport::toy_config(Variant::fullface_pair, f.ds.feature_shape), 1);
    const auto out = train(b, f.bank, f.train, f.val, quiet(2));
    write_curve_csv(out.report, dir / "c.csv");
    std::ifstream in(dir / "c.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,train_loss,train_acc,val_loss,val_acc");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 2);
}

TEST_CASE("landmark study on all-zero features stays at chance") {
    auto ds = testsupport::small_dataset(400, 0.0, 16);
    for (auto& t : ds.features) t.fill(0.0f);
    const auto pairs = data::generate_pairs(ds.subjects, {}, 16);
    LandmarkStudyConfig cfg;
    cfg.repeats = 1;
    cfg.model = testsupport::toy_config(Variant::landmark_single, ds.feature_shape);
    cfg.train = quiet(1);
    cfg.seed = 3;
    const auto st = run_landmark_study(ds, pairs, cfg);
    REQUIRE(st.rows.size() == 4);
    CHECK(st.rows.back().name == "combined");
    for (const auto& r : st.rows) {
        // Binomial SD for roughly 90 test pairs is about 5.3 points.
        CHECK(std::abs(r.mean - 50.0) <= 16.0);
    }
    CHECK_THROWS_AS(st.row("ears"), ProtocolError);
}
