#ifndef PAIRCLF_MODEL_BUNDLE_HPP
#define PAIRCLF_MODEL_BUNDLE_HPP

// Model bundle file, version 1:
//
//   "FPMB" | u16 LE version | u32 LE header length | UTF-8 JSON header | FPTN tensors...
//
// The JSON header records the model config, the training seed, the Adam
// hyper-parameters and step count, and the ordered list of tensor names. The
// FPTN tensors follow back to back in that order: trainable parameters,
// batchnorm buffers, then Adam first and second moments (absent before the
// first update).

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairclf/core/error.hpp"
#include "pairclf/core/fptn.hpp"
#include "pairclf/model/pair_model.hpp"
#include "pairclf/nn/adam.hpp"

namespace pairclf::model {

struct ModelBundle {
    PairModel<float> model;
    nn::Adam<float> optimizer;
    std::uint64_t seed = 0;
    /// Landmark region fed to each input stream; empty for unmasked features.
    std::vector<std::string> streams;
};

/// Fresh model with Glorot-initialized weights drawn from `seed`.
inline ModelBundle build_model(const ModelConfig& cfg, std::uint64_t seed, nn::AdamConfig adam = {}) {
    ModelBundle b{PairModel<float>(cfg), nn::Adam<float>(adam), seed, {}};
    b.model.init(seed);
    return b;
}

inline constexpr char kBundleMagic[4] = {'F', 'P', 'M', 'B'};
inline constexpr std::uint16_t kBundleVersion = 1;

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"variant", to_string(c.variant)},
            {"input_shape", {c.height, c.width, c.channels}},
            {"conv_width", c.conv_width},
            {"block_dropout", c.block_dropout},
            {"head_width", c.head_width},
            {"head_dropout", c.head_dropout},
            {"combine", to_string(c.combine)},
            {"padding", c.padding == nn::Padding::same ? "same" : "valid"}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    const auto shape = j.at("input_shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) throw FormatError("model bundle input_shape must have 3 extents");
    c.height = shape[0];
    c.width = shape[1];
    c.channels = shape[2];
    c.conv_width = j.at("conv_width").get<std::size_t>();
    c.block_dropout = j.at("block_dropout").get<double>();
    c.head_width = j.at("head_width").get<std::size_t>();
    c.head_dropout = j.at("head_dropout").get<double>();
    c.combine = parse_combine(j.at("combine").get<std::string>());
    const auto pad = j.at("padding").get<std::string>();
    if (pad != "same" && pad != "valid") throw FormatError("model bundle padding must be same or valid");
    c.padding = pad == "same" ? nn::Padding::same : nn::Padding::valid;
    return c;
}

inline std::vector<std::uint8_t> encode_bundle(ModelBundle& b) {
    const auto& a = b.optimizer.config();
    nlohmann::json header;
    header["config"] = config_to_json(b.model.config());
    header["seed"] = b.seed;
    header["streams"] = b.streams;
    header["adam"] = {{"lr0", a.lr0}, {"decay", a.decay}, {"beta1", a.beta1}, {"beta2", a.beta2},
                      {"epsilon", a.epsilon}, {"t", b.optimizer.step_count()}};
    std::vector<std::string> names;
    std::vector<const Tensor<float>*> tensors;
    for (auto& [n, p] : b.model.named_params()) names.push_back("param:" + n), tensors.push_back(&p->value);
    for (auto& [n, t] : b.model.named_buffers()) names.push_back("buffer:" + n), tensors.push_back(t);
    auto& m = b.optimizer.first_moments();
    auto& v = b.optimizer.second_moments();
    for (std::size_t i = 0; i < m.size(); ++i) names.push_back("adam_m:" + std::to_string(i)), tensors.push_back(&m[i]);
    for (std::size_t i = 0; i < v.size(); ++i) names.push_back("adam_v:" + std::to_string(i)), tensors.push_back(&v[i]);
    header["tensors"] = names;
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(kBundleMagic, kBundleMagic + 4);
    out.push_back(static_cast<std::uint8_t>(kBundleVersion & 0xff));
    out.push_back(static_cast<std::uint8_t>(kBundleVersion >> 8));
    const auto len = static_cast<std::uint32_t>(text.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((len >> (8 * i)) & 0xff));
    out.insert(out.end(), text.begin(), text.end());
    for (const auto* t : tensors) {
        auto bytes = fptn::encode(*t);
        out.insert(out.end(), bytes.begin(), bytes.end());
    }
    return out;
}

inline ModelBundle decode_bundle(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 10 || std::memcmp(bytes.data(), kBundleMagic, 4) != 0) throw BadMagicError("not a model bundle");
    const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
    if (version != kBundleVersion) throw BadVersionError("unsupported model bundle version " + std::to_string(version));
    const std::uint32_t len = fptn::detail::get_u32(bytes.data() + 6);
    if (bytes.size() - 10 < len) throw TruncatedError("model bundle header truncated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 10, bytes.begin() + 10 + len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model bundle header is not valid JSON: ") + e.what());
    }
    try {
        const auto& a = header.at("adam");
        nn::AdamConfig ac{a.at("lr0").get<double>(), a.at("decay").get<double>(), a.at("beta1").get<double>(),
                          a.at("beta2").get<double>(), a.at("epsilon").get<double>()};
        ModelBundle b{PairModel<float>(config_from_json(header.at("config"))), nn::Adam<float>(ac),
                      header.at("seed").get<std::uint64_t>(), {}};
        b.optimizer.set_step_count(a.at("t").get<std::uint64_t>());
        if (header.contains("streams")) b.streams = header.at("streams").get<std::vector<std::string>>();
        if (!b.streams.empty() && b.streams.size() != b.model.config().streams())
            throw FormatError("model bundle lists " + std::to_string(b.streams.size()) + " landmark streams for a " +
                              std::to_string(b.model.config().streams()) + "-stream model");
        const auto names = header.at("tensors").get<std::vector<std::string>>();

        std::vector<Tensor<float>*> slots;
        std::vector<std::string> expected;
        for (auto& [n, p] : b.model.named_params()) expected.push_back("param:" + n), slots.push_back(&p->value);
        for (auto& [n, t] : b.model.named_buffers()) expected.push_back("buffer:" + n), slots.push_back(t);
        const std::size_t n_params = b.model.params().size();
        const bool has_moments = names.size() == expected.size() + 2 * n_params;
        if (has_moments) {
            for (auto* p : b.model.params()) {
                b.optimizer.first_moments().emplace_back(p->value.shape());
                b.optimizer.second_moments().emplace_back(p->value.shape());
            }
            for (std::size_t i = 0; i < n_params; ++i)
                expected.push_back("adam_m:" + std::to_string(i)), slots.push_back(&b.optimizer.first_moments()[i]);
            for (std::size_t i = 0; i < n_params; ++i)
                expected.push_back("adam_v:" + std::to_string(i)), slots.push_back(&b.optimizer.second_moments()[i]);
        }
        if (names != expected) throw FormatError("model bundle tensor list does not match its architecture");

        std::size_t pos = 10 + len;
        for (auto* slot : slots) {
            Tensor<float> t = fptn::decode_at(bytes, pos);
            if (t.shape() != slot->shape())
                throw FormatError("model bundle tensor shape " + shape_str(t.shape()) + " != expected " + shape_str(slot->shape()));
            *slot = std::move(t);
        }
        if (pos != bytes.size()) throw TrailingBytesError("model bundle has trailing bytes");
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model bundle header malformed: ") + e.what());
    }
}

inline void save_bundle(ModelBundle& b, const std::filesystem::path& path) { fptn::write_bytes(path, encode_bundle(b)); }

inline ModelBundle load_bundle(const std::filesystem::path& path) { return decode_bundle(fptn::read_bytes(path)); }

} // namespace pairclf::model

#endif // PAIRCLF_MODEL_BUNDLE_HPP
