#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "test_support.hpp"

using namespace pairclf;
using namespace pairclf::analysis;
using model::IndexedPair;
using Catch::Approx;

namespace {

// A planted dataset with a trained fullface model, shared across test cases.
struct Planted {
    data::Dataset ds;
    model::FeatureBank bank;
    std::vector<IndexedPair> train, test;
    model::ModelBundle bundle;

    Planted()
        : ds(testsupport::small_dataset(600, 2.0, 21)), bank(model::FeatureBank::raw(ds)),
          bundle(model::build_model(testsupport::toy_config(model::Variant::fullface_pair, ds.feature_shape, 8, 16), 3)) {
        const auto pairs = data::generate_pairs(ds.subjects, {}, 21);
        data::SplitConfig c;
        c.seed = 21;
        const auto s = data::split_pairs(pairs, c);
        train = model::resolve(ds, s.train);
        test = model::resolve(ds, s.test);
        model::TrainOptions t;
        t.epochs = 30;
        model::train(bundle, bank, train, {}, t);
    }

    const data::Rect& nose() const { return ds.subjects[0].find_region("nose")->rect; }
};

const Planted& planted() {
    static const Planted p;
    return p;
}

model::ModelBundle constant_model(const data::Dataset& ds, const model::FeatureBank& bank,
                                  const std::vector<IndexedPair>& pairs, float bias) {
    auto b = model::build_model(testsupport::toy_config(model::Variant::fullface_pair, ds.feature_shape), 1);
    testsupport::warm_up(b.model, bank, pairs);
    testsupport::make_constant(b.model, bias);
    return b;
}

// Cyclic Jacobi eigen-decomposition of a small symmetric matrix.
void jacobi(std::vector<std::vector<double>> a, std::vector<double>& vals, std::vector<std::vector<double>>& vecs) {
    const std::size_t n = a.size();
    vecs.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) vecs[i][i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double th = 0.5 * std::atan2(2 * a[p][q], a[q][q] - a[p][p]);
                const double c = std::cos(th), s = std::sin(th);
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = vecs[k][p], vkq = vecs[k][q];
                    vecs[k][p] = c * vkp - s * vkq;
                    vecs[k][q] = s * vkp + c * vkq;
                }
            }
    }
    vals.resize(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = a[i][i];
}

std::vector<std::vector<double>> random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
    Prng r(seed);
    std::vector<std::vector<double>> v(n, std::vector<double>(d));
    for (auto& row : v)
        for (auto& x : row) x = r.normal();
    return v;
}

// Checks pca_2d against the Jacobi decomposition of the scatter matrix.
void check_against_jacobi(const std::vector<std::vector<double>>& pts) {
    const std::size_t n = pts.size(), d = pts[0].size();
    std::vector<double> mu(d, 0.0);
    for (const auto& p : pts)
        for (std::size_t j = 0; j < d; ++j) mu[j] += p[j] / static_cast<double>(n);
    std::vector<std::vector<double>> S(d, std::vector<double>(d, 0.0));
    double total = 0;
    for (const auto& p : pts)
        for (std::size_t i = 0; i < d; ++i) {
            total += (p[i] - mu[i]) * (p[i] - mu[i]);
            for (std::size_t j = 0; j < d; ++j) S[i][j] += (p[i] - mu[i]) * (p[j] - mu[j]);
        }
    std::vector<double> vals;
    std::vector<std::vector<double>> vecs;
    jacobi(S, vals, vecs);
    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] > vals[b]; });

    const auto pca = pca_2d(pts);
    for (std::size_t k = 0; k < 2; ++k) {
        const std::size_t col = order[k];
        CHECK(pca.explained_ratio[k] == Approx(vals[col] / total).margin(1e-8));
        double dot = 0;
        for (std::size_t i = 0; i < d; ++i) dot += pca.components[k][i] * vecs[i][col];
        CHECK(std::abs(dot) == Approx(1.0).margin(1e-8));
    }
    double n0 = 0, n1 = 0, cross = 0;
    for (std::size_t i = 0; i < d; ++i) {
        n0 += pca.components[0][i] * pca.components[0][i];
        n1 += pca.components[1][i] * pca.components[1][i];
        cross += pca.components[0][i] * pca.components[1][i];
    }
    CHECK(n0 == Approx(1.0).margin(1e-10));
    CHECK(n1 == Approx(1.0).margin(1e-10));
    CHECK(std::abs(cross) < 1e-10);
    for (std::size_t i = 0; i < n; ++i) {
        double p0 = 0;
        for (std::size_t j = 0; j < d; ++j) p0 += (pts[i][j] - mu[j]) * pca.components[0][j];
        CHECK(pca.coords[i][0] == Approx(p0).margin(1e-9));
    }
}

std::vector<std::size_t> subjects_with(const data::Dataset& ds, data::Label l, data::Gender g) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.subjects.size(); ++i)
        if (ds.subjects[i].label == l && ds.subjects[i].gender == g) out.push_back(i);
    return out;
}

} // namespace

// ---- saliency

TEST_CASE("a constant model has zero saliency everywhere") {
    auto ds = testsupport::small_dataset(60, 1.0, 1);
    const auto bank = model::FeatureBank::raw(ds);
    const std::vector<IndexedPair> pairs{{0, 1, 1}, {2, 3, 0}};
    auto b = constant_model(ds, bank, pairs, 0.7f);
    const auto r = occlusion_saliency(b.model, bank, pairs[0], Side::left, 5);
    for (double d : r.grid) CHECK(d == 0.0);
    REQUIRE(r.top.size() == 5);
    // Ties resolve in row-major order.
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(r.top[i].row == 0);
        CHECK(r.top[i].col == i);
    }
    CHECK_THROWS_AS(occlusion_saliency(b.model, bank, pairs[0], Side::left, 0), ConfigError);
}

TEST_CASE("occluding an all-zero cell changes nothing") {
    auto ds = testsupport::small_dataset(40, 1.0, 2);
    for (std::size_t c = 0; c < 2; ++c) ds.features[5][(3 * 8 + 4) * 2 + c] = 0.0f;
    const auto bank = model::FeatureBank::raw(ds);
    auto b = model::build_model(testsupport::toy_config(model::Variant::fullface_pair, ds.feature_shape), 2);
    const std::vector<IndexedPair> pairs{{5, 6, 0}};
    testsupport::warm_up(b.model, bank, pairs);
    const auto r = occlusion_saliency(b.model, bank, pairs[0], Side::left);
    CHECK(r.grid[3 * 8 + 4] == 0.0);
    CHECK(r.top.size() == 50);
    CHECK(r.height == 8);
}

TEST_CASE("saliency of a planted model concentrates on the planted region") {
    const auto& p = planted();
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < 10 && i < p.test.size(); ++i) {
        const auto& pr = p.test[i];
        const Side ent = pr.target == 0 ? Side::left : Side::right;
        const auto r = occlusion_saliency(p.bundle.model, p.bank, pr, ent, 4);
        sum += fraction_inside(r, p.nose(), 4);
        ++n;
    }
    CHECK(sum / static_cast<double>(n) >= 0.7);
}

TEST_CASE("fraction_inside counts ranked cells") {
    SaliencyResult r;
    r.top = {{0, 0, 1.0}, {1, 1, 0.5}, {5, 5, 0.2}};
    const data::Rect rect{0, 2, 0, 2};
    CHECK(fraction_inside(r, rect, 2) == 1.0);
    CHECK(fraction_inside(r, rect, 3) == Approx(2.0 / 3.0));
    CHECK(fraction_inside(r, rect, 10) == Approx(2.0 / 3.0));
    CHECK(fraction_inside(SaliencyResult{}, rect, 3) == 0.0);
    CHECK(parse_side("right") == Side::right);
    CHECK_THROWS_AS(parse_side("up"), ConfigError);
}

// ---- PCA, clustering, embedding

TEST_CASE("pca of collinear points has one component") {
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 6; ++i) pts.push_back({1.0 + 2.0 * i, -1.0 + 1.0 * i, 3.0});
    const auto pca = pca_2d(pts);
    CHECK(pca.explained_ratio[0] == Approx(1.0).margin(1e-12));
    CHECK(pca.explained_ratio[1] == Approx(0.0).margin(1e-12));
    const double s = std::sqrt(5.0);
    CHECK(pca.components[0][0] == Approx(2.0 / s).margin(1e-12));
    CHECK(pca.components[0][1] == Approx(1.0 / s).margin(1e-12));
    CHECK(pca.components[0][2] == Approx(0.0).margin(1e-12));
    for (const auto& c : pca.coords) CHECK(c[1] == Approx(0.0).margin(1e-10));
    CHECK(pca.mean == std::vector<double>{6.0, 1.5, 3.0});
}

TEST_CASE("pca matches a Jacobi oracle") {
    SECTION("fewer points than dimensions") { check_against_jacobi(random_points(3, 5, 1)); }
    SECTION("more points than dimensions") { check_against_jacobi(random_points(20, 4, 2)); }
    SECTION("wide embeddings") { check_against_jacobi(random_points(8, 30, 3)); }
}

TEST_CASE("pca rejects degenerate input") {
    CHECK_THROWS_AS(pca_2d({{1, 2}, {3, 4}}), ShapeError);
    CHECK_THROWS_AS(pca_2d({{1, 2}, {3, 4}, {5}}), ShapeError);
    CHECK_THROWS_AS(pca_2d({{1, 2}, {1, 2}, {1, 2}}), NumericalError);
}

TEST_CASE("two_means separates two blobs and purity scores them") {
    std::vector<std::array<double, 2>> pts;
    std::vector<std::string> cls;
    Prng r(4);
    for (int i = 0; i < 40; ++i) {
        const bool a = i % 2 == 0;
        pts.push_back({(a ? -5.0 : 5.0) + 0.3 * r.normal(), 0.3 * r.normal()});
        cls.emplace_back(a ? "a" : "b");
    }
    const auto k = two_means(pts, 9);
    CHECK(purity(k, cls) == 1.0);
    for (int i = 2; i < 40; ++i) CHECK(k[static_cast<std::size_t>(i)] == k[static_cast<std::size_t>(i % 2)]);
    CHECK(two_means(pts, 9) == k);
    CHECK(purity({0, 0, 1, 1}, {"x", "y", "x", "y"}) == 0.5);
    CHECK_THROWS_AS(purity({0}, {"x", "y"}), ShapeError);
    CHECK_THROWS_AS(two_means({{0, 0}}, 1), ShapeError);
}

TEST_CASE("sample_subjects draws each gender without replacement") {
    const auto ds = testsupport::small_dataset(200, 0.0, 5);
    const auto s = sample_subjects(ds, 30, 10, 3);
    CHECK(s.size() == 40);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
    std::size_t f = 0;
    for (auto i : s) f += ds.subjects[i].gender == data::Gender::f;
    CHECK(f == 10);
    CHECK(sample_subjects(ds, 30, 10, 3) == s);
    CHECK(sample_subjects(ds, 1000, 0, 3).size() < 200);
}

TEST_CASE("embedding study needs both labels") {
    const auto& p = planted();
    auto ents = subjects_with(p.ds, data::Label::ent, data::Gender::m);
    const auto fem = subjects_with(p.ds, data::Label::ent, data::Gender::f);
    ents.resize(10);
    ents.push_back(fem[0]);
    CHECK_THROWS_AS(embedding_study(p.bundle.model, p.bank, p.ds, ents, 1), ProtocolError);
}

TEST_CASE("planted embeddings cluster by label rather than gender") {
    const auto& p = planted();
    const auto subjects = sample_subjects(p.ds, 100, 60, 8);
    const auto st = embedding_study(p.bundle.model, p.bank, p.ds, subjects, 8);
    CHECK(st.label_purity >= 0.9);
    CHECK(st.label_purity >= st.gender_purity);
    CHECK(st.clusters.size() == subjects.size());

    testsupport::TempDir dir("embed");
    write_embedding_csv(st, p.ds, dir / "e.csv");
    std::ifstream in(dir / "e.csv");
    std::string head;
    std::getline(in, head);
    CHECK(head == "subject_id,label,gender,pc1,pc2,cluster");
    const auto svg = embedding_svg(st, p.ds);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(std::count(svg.begin(), svg.end(), '\n') >= static_cast<long>(subjects.size()));
}

TEST_CASE("an untrained model on noise gives weak label purity") {
    const auto ds = testsupport::small_dataset(400, 0.0, 9);
    const auto bank = model::FeatureBank::raw(ds);
    auto b = model::build_model(testsupport::toy_config(model::Variant::fullface_pair, ds.feature_shape), 2);
    const std::vector<IndexedPair> warm{{0, 1, 0}, {2, 3, 1}, {4, 5, 0}, {6, 7, 1}};
    testsupport::warm_up(b.model, bank, warm);
    const auto st = embedding_study(b.model, bank, ds, sample_subjects(ds, 100, 60, 9), 9);
    // Majority-class purity of a coin-flip split sits near the 0.6 ENT share.
    CHECK(st.label_purity < 0.75);
}

// ---- subgroups

TEST_CASE("subgroup accuracy partitions the overall counts") {
    const auto& p = planted();
    const auto t = subgroup_accuracy(p.bundle.model, p.bank, p.ds, p.test, GroupBy::gender());
    std::size_t total = 0, correct = 0;
    for (const auto& r : t.rows) total += r.counts.total(), correct += r.counts.correct();
    CHECK(total == p.test.size());
    CHECK(correct == t.overall.correct());
    CHECK(model::accuracy(t.overall) == model::evaluate(p.bundle.model, p.bank, p.test).accuracy);
    CHECK(std::find(t.empty_groups.begin(), t.empty_groups.end(), "X") != t.empty_groups.end());
}

TEST_CASE("an all-male pair set yields a single row") {
    const auto& p = planted();
    std::vector<IndexedPair> male;
    for (const auto& pr : p.test)
        if (p.ds.subjects[pr.left].gender == data::Gender::m) male.push_back(pr);
    const auto t = subgroup_accuracy(p.bundle.model, p.bank, p.ds, male, GroupBy::gender());
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].group == "M");
    CHECK(t.empty_groups == std::vector<std::string>{"F", "X"});
    CHECK_THROWS_AS(subgroup_accuracy(p.bundle.model, p.bank, p.ds, {}, GroupBy::gender()), ProtocolError);
}

TEST_CASE("tag grouping omits empty groups and rejects split pairs") {
    auto ds = testsupport::small_dataset(120, 1.0, 10);
    const auto bank = model::FeatureBank::raw(ds);
    const auto pairs = model::resolve(ds, data::generate_pairs(ds.subjects, {}, 10));
    auto b = constant_model(ds, bank, pairs, 0.0f);
    const auto t = subgroup_accuracy(b.model, bank, ds, pairs, GroupBy::by_tag("founder"));
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].group == "not-founder");
    CHECK(t.empty_groups == std::vector<std::string>{"founder"});

    ds.subjects[pairs[0].left].tags.insert("founder");
    CHECK_THROWS_AS(subgroup_accuracy(b.model, bank, ds, pairs, GroupBy::by_tag("founder")), ProtocolError);

    testsupport::TempDir dir("sub");
    write_subgroup_csv(t, dir / "s.csv");
    std::ifstream in(dir / "s.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "group,n,correct,accuracy");
}

TEST_CASE("planted signal is exchangeable across genders") {
    const auto ds = testsupport::small_dataset(1500, 2.0, 11);
    const auto bank = model::FeatureBank::raw(ds);
    const auto pairs = model::resolve(ds, data::generate_pairs(ds.subjects, {}, 11));
    const auto& p = planted();
    const auto t = subgroup_accuracy(p.bundle.model, bank, ds, pairs, GroupBy::gender());
    REQUIRE(t.rows.size() == 2);
    const double nm = static_cast<double>(t.rows[0].counts.total()), nf = static_cast<double>(t.rows[1].counts.total());
    const double pbar = model::accuracy(t.overall) / 100.0;
    const double se = 100.0 * std::sqrt(pbar * (1 - pbar) * (1 / nm + 1 / nf));
    CHECK(std::abs(t.rows[0].accuracy - t.rows[1].accuracy) <= std::max(5.0, 4 * se));
}

// ---- perturbation

TEST_CASE("zero perturbation changes nothing") {
    const auto& p = planted();
    CHECK(perturb_confidence(p.bundle.model, p.bank, p.test, Perturbation::gaussian(0.0), 1) == 0.0);
    CHECK_THROWS_AS(perturb_confidence(p.bundle.model, p.bank, p.test, Perturbation::gaussian(-1.0), 1), ConfigError);
    CHECK_THROWS_AS(perturb_confidence(p.bundle.model, p.bank, {}, Perturbation::gaussian(1.0), 1), ProtocolError);
}

TEST_CASE("a constant model ignores perturbations") {
    const auto ds = testsupport::small_dataset(80, 1.0, 12);
    const auto bank = model::FeatureBank::raw(ds);
    const auto pairs = model::resolve(ds, data::generate_pairs(ds.subjects, {}, 12));
    auto b = constant_model(ds, bank, pairs, 1.5f);
    CHECK(perturb_confidence(b.model, bank, pairs, Perturbation::gaussian(1.0), 2) == 0.0);
    CHECK(perturb_confidence(b.model, bank, pairs, Perturbation::shuffle(), 2) == 0.0);
}

TEST_CASE("confidence change grows with the noise level") {
    const auto& p = planted();
    double prev = 0.0;
    for (double s : {0.1, 0.5, 1.0, 2.0}) {
        const double d = perturb_confidence(p.bundle.model, p.bank, p.test, Perturbation::gaussian(s), 5);
        CHECK(d >= prev);
        prev = d;
    }
    CHECK(prev > 0.0);
    CHECK(perturb_confidence(p.bundle.model, p.bank, p.test, Perturbation::gaussian(0.5), 5) ==
          perturb_confidence(p.bundle.model, p.bank, p.test, Perturbation::gaussian(0.5), 5));
}

TEST_CASE("shuffling a single cell is the identity") {
    const auto& p = planted();
    CHECK(perturb_confidence(p.bundle.model, p.bank, p.test, Perturbation::shuffle(data::Rect{3, 4, 3, 4}), 6) == 0.0);
    const double whole = perturb_confidence(p.bundle.model, p.bank, p.test, Perturbation::shuffle(), 6);
    CHECK(whole > 0.0);
    CHECK(perturb_confidence(p.bundle.model, p.bank, p.test, Perturbation::shuffle(), 6) == whole);
}

// ---- single-subject scoring

TEST_CASE("a constant model scores every subject at exactly one half") {
    const auto ds = testsupport::small_dataset(80, 1.0, 13);
    const auto bank = model::FeatureBank::raw(ds);
    const auto pairs = model::resolve(ds, data::generate_pairs(ds.subjects, {}, 13));
    auto b = constant_model(ds, bank, pairs, 2.5f);
    const auto males = subjects_with(ds, data::Label::non, data::Gender::m);
    const std::vector<std::size_t> panel(males.begin() + 1, males.begin() + 6);
    CHECK(score_single(b.model, bank, ds, males[0], panel) == 0.5);
}

TEST_CASE("single-subject score ignores panel order and checks gender") {
    const auto& p = planted();
    const auto nm = subjects_with(p.ds, data::Label::non, data::Gender::m);
    const auto em = subjects_with(p.ds, data::Label::ent, data::Gender::m);
    const auto ef = subjects_with(p.ds, data::Label::ent, data::Gender::f);
    std::vector<std::size_t> panel(nm.begin(), nm.begin() + 7);
    const double a = score_single(p.bundle.model, p.bank, p.ds, em[0], panel);
    std::reverse(panel.begin(), panel.end());
    std::swap(panel[1], panel[4]);
    CHECK(score_single(p.bundle.model, p.bank, p.ds, em[0], panel) == a);
    CHECK_THROWS_AS(score_single(p.bundle.model, p.bank, p.ds, ef[0], panel), ProtocolError);
    CHECK_NOTHROW(score_single(p.bundle.model, p.bank, p.ds, ef[0], panel, true));
    CHECK_THROWS_AS(score_single(p.bundle.model, p.bank, p.ds, em[0], {}), ProtocolError);
}

TEST_CASE("planted ENT subjects score high against a NON panel") {
    const auto& p = planted();
    const auto nm = subjects_with(p.ds, data::Label::non, data::Gender::m);
    const auto em = subjects_with(p.ds, data::Label::ent, data::Gender::m);
    const std::vector<std::size_t> panel(nm.begin(), nm.begin() + 20);
    double ent = 0, non = 0;
    for (std::size_t i = 0; i < 10; ++i) {
        ent += score_single(p.bundle.model, p.bank, p.ds, em[i], panel) / 10.0;
        non += score_single(p.bundle.model, p.bank, p.ds, nm[20 + i], panel) / 10.0;
    }
    CHECK(ent >= 0.9);
    CHECK(non <= 0.6);
}

// ---- rendering

TEST_CASE("saliency CSV and SVG outputs") {
    const auto& p = planted();
    const auto r = occlusion_saliency(p.bundle.model, p.bank, p.test[0], Side::left, 6);
    testsupport::TempDir dir("sal");
    write_saliency_csv(r, dir / "s.csv");
    std::ifstream in(dir / "s.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "rank,row,col,delta");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 6);
    const auto svg = saliency_svg(r);
    CHECK(svg.rfind("<svg", 0) == 0);
    // One rect per cell plus the background.
    std::size_t rects = 0;
    for (auto pos = svg.find("<rect"); pos != std::string::npos; pos = svg.find("<rect", pos + 1)) ++rects;
    CHECK(rects == 64 + 1);
}
