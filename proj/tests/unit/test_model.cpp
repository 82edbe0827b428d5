#include <catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace pairclf;
using namespace pairclf::model;
using testsupport::random_tensor;

namespace {

PairInput<float> random_input(const ModelConfig& c, std::size_t batch, std::uint64_t seed) {
    PairInput<float> in;
    for (std::size_t s = 0; s < c.streams(); ++s) {
        in.left.push_back(random_tensor<float>({batch, c.height, c.width, c.channels}, seed + 2 * s));
        in.right.push_back(random_tensor<float>({batch, c.height, c.width, c.channels}, seed + 2 * s + 1));
    }
    return in;
}

std::size_t buffer_values(PairModel<float>& m, bool include_flags) {
    std::size_t n = 0;
    for (auto& [name, t] : m.named_buffers())
        if (include_flags || name.find("stats_ready") == std::string::npos) n += t->size();
    return n;
}

void warm(PairModel<float>& m, const PairInput<float>& in) {
    Prng rng(1);
    PairCache<float> cache;
    m.forward(in, nn::Mode::train, rng, &cache);
}

} // namespace

TEST_CASE("landmark_single parameter count at 14x14x8") {
    // conv 8->64: 9*8*64+64 = 4672, batchnorm 2*64 = 128,
    // conv 64->64: 9*64*64+64 = 36928, batchnorm 128,
    // pool to 7x7x64 = 3136 per side, dense 2*3136+1 = 6273.
    PairModel<float> m(ModelConfig::defaults(Variant::landmark_single));
    CHECK(m.parameter_count() == 4672 + 128 + 36928 + 128 + 6273);
    CHECK(m.parameter_count() == 48129);
    CHECK(buffer_values(m, false) == 256);
}

TEST_CASE("fullface and combined parameter counts follow the layer sums") {
    PairModel<float> ff(ModelConfig::defaults(Variant::fullface_pair));
    // conv 8->32, conv 32->32, batchnorm 32, dense 2*14*14*32 -> 512, dense 512 -> 1.
    const std::size_t trunk = (9 * 8 * 32 + 32) + (9 * 32 * 32 + 32) + 2 * 32;
    CHECK(ff.parameter_count() == trunk + (2 * 14 * 14 * 32 * 512 + 512) + (512 + 1));
    PairModel<float> comb(ModelConfig::defaults(Variant::landmark_combined));
    CHECK(comb.parameter_count() == 3 * (4672 + 128 + 36928 + 128) + (6 * 3136 + 1));
}

TEST_CASE("default widths per variant") {
    CHECK(ModelConfig::defaults(Variant::fullface_pair).conv_width == 32);
    CHECK(ModelConfig::defaults(Variant::landmark_single).conv_width == 64);
    CHECK(ModelConfig::defaults(Variant::landmark_combined).streams() == 3);
    CHECK(parse_variant("landmark_combined") == Variant::landmark_combined);
    CHECK_THROWS_AS(parse_variant("resnet"), ConfigError);
    auto bad = ModelConfig::defaults(Variant::fullface_pair);
    bad.head_dropout = 1.0;
    CHECK_THROWS_AS(PairModel<float>(bad), ConfigError);
}

TEST_CASE("fullface forward yields one probability per pair") {
    auto c = ModelConfig::defaults(Variant::fullface_pair);
    auto b = build_model(c, 3);
    const auto in = random_input(c, 2, 10);
    warm(b.model, in);
    const auto p = b.model.predict(in);
    REQUIRE(p.shape() == Shape{2, 1});
    for (float v : p.data()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("wrong stream count or shape is a shape error") {
    auto c = testsupport::toy_config(Variant::landmark_combined, {6, 6, 2});
    PairModel<float> m(c);
    m.init(1);
    auto in = random_input(c, 2, 1);
    in.left.pop_back();
    Prng rng(0);
    CHECK_THROWS_AS(m.forward(in, nn::Mode::train, rng, nullptr), ShapeError);
    auto in2 = random_input(testsupport::toy_config(Variant::landmark_combined, {6, 5, 2}), 2, 1);
    CHECK_THROWS_AS(m.forward(in2, nn::Mode::train, rng, nullptr), ShapeError);
}

TEST_CASE("branches share their weights") {
    auto c = testsupport::toy_config(Variant::fullface_pair, {6, 6, 2});
    PairModel<float> m(c);
    m.init(4);
    const auto in = random_input(c, 3, 5);
    warm(m, in);
    const auto l0 = m.embed(in.left[0]), r0 = m.embed(in.right[0]);
    auto& conv = static_cast<nn::Conv2d<float>&>(m.trunk()[0]);
    conv.weight().value[0] += 0.5f;
    const auto l1 = m.embed(in.left[0]), r1 = m.embed(in.right[0]);
    CHECK_FALSE(l0 == l1);
    CHECK_FALSE(r0 == r1);
    // Swapping sides feeds the same trunk, so embeddings just swap.
    CHECK(m.embed(in.right[0]) == r1);
}

TEST_CASE("initialization is a function of the seed") {
    auto c = testsupport::toy_config(Variant::landmark_single, {6, 6, 2});
    PairModel<float> a(c), b(c), d(c);
    a.init(7);
    b.init(7);
    d.init(8);
    auto pa = a.params(), pb = b.params(), pd = d.params();
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->value == pb[i]->value);
        any_diff |= !(pa[i]->value == pd[i]->value);
    }
    CHECK(any_diff);
}

TEST_CASE("model bundle round-trip preserves eval outputs bit-exactly") {
    testsupport::TempDir dir("bundle");
    for (auto v : {Variant::fullface_pair, Variant::landmark_single, Variant::landmark_combined}) {
        auto c = testsupport::toy_config(v, {6, 6, 2});
        auto b = build_model(c, 11);
        if (v == Variant::landmark_single) b.streams = {"nose"};
        if (v == Variant::landmark_combined) b.streams = {"eyes", "nose", "mouth"};
        const auto in = random_input(c, 4, 12);
        // One optimizer step so Adam moments are serialized too.
        Prng rng(0);
        PairCache<float> cache;
        b.model.zero_grad();
        b.model.forward(in, nn::Mode::train, rng, &cache);
        b.model.backward(cache, Tensor<float>({4, 1}, 1.0f));
        auto params = b.model.params();
        b.optimizer.step(params);

        save_bundle(b, dir / "m.fpmb");
        auto back = load_bundle(dir / "m.fpmb");
        CHECK(back.model.predict(in) == b.model.predict(in));
        CHECK(back.streams == b.streams);
        CHECK(back.seed == 11);
        CHECK(back.optimizer.step_count() == 1);
        REQUIRE(back.optimizer.first_moments().size() == params.size());
        CHECK(back.optimizer.first_moments()[0] == b.optimizer.first_moments()[0]);
        CHECK(encode_bundle(back) == encode_bundle(b));
    }
}

TEST_CASE("bundle without optimizer moments loads") {
    auto c = testsupport::toy_config(Variant::fullface_pair, {4, 4, 1});
    auto b = build_model(c, 1);
    auto back = decode_bundle(encode_bundle(b));
    CHECK(back.optimizer.first_moments().empty());
    CHECK(back.model.params()[0]->value == b.model.params()[0]->value);
}

TEST_CASE("malformed bundles are format errors") {
    auto c = testsupport::toy_config(Variant::landmark_single, {4, 4, 1});
    auto b = build_model(c, 1);
    auto bytes = encode_bundle(b);

    auto magic = bytes;
    magic[0] = 'Z';
    CHECK_THROWS_AS(decode_bundle(magic), BadMagicError);

    auto trailing = bytes;
    trailing.push_back(1);
    CHECK_THROWS_AS(decode_bundle(trailing), TrailingBytesError);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    CHECK_THROWS_AS(decode_bundle(truncated), FormatError);

    b.streams = {"eyes", "nose"};
    CHECK_THROWS_AS(decode_bundle(encode_bundle(b)), FormatError);
}

TEST_CASE("float to double conversion keeps outputs") {
    auto c = testsupport::toy_config(Variant::fullface_pair, {5, 5, 2});
    PairModel<float> f(c);
    f.init(3);
    const auto in = random_input(c, 2, 4);
    warm(f, in);
    auto d = convert<double>(f);
    PairInput<double> ind;
    for (auto& t : in.left) ind.left.push_back(t.cast<double>());
    for (auto& t : in.right) ind.right.push_back(t.cast<double>());
    const auto pf = f.predict(in);
    const auto pd = d.predict(ind);
    for (std::size_t i = 0; i < pf.size(); ++i) CHECK(pd[i] == Catch::Approx(pf[i]).margin(1e-5));
}

TEST_CASE("logit output is the pre-sigmoid value") {
    auto c = testsupport::toy_config(Variant::landmark_single, {6, 6, 2});
    PairModel<float> m(c);
    m.init(2);
    const auto in = random_input(c, 3, 9);
    warm(m, in);
    const auto z = m.predict(in, true), p = m.predict(in);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(nn::Sigmoid<float>::apply(z[i]) == Catch::Approx(p[i]));
}
