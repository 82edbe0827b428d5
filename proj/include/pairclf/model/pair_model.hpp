#ifndef PAIRCLF_MODEL_PAIR_MODEL_HPP
#define PAIRCLF_MODEL_PAIR_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pairclf/core/error.hpp"
#include "pairclf/core/prng.hpp"
#include "pairclf/core/tensor.hpp"
#include "pairclf/nn/layers.hpp"
#include "pairclf/nn/sequential.hpp"

namespace pairclf::model {

enum class Variant { fullface_pair, landmark_single, landmark_combined };
enum class Combine { concat, absdiff };

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::fullface_pair: return "fullface_pair";
        case Variant::landmark_single: return "landmark_single";
        case Variant::landmark_combined: return "landmark_combined";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "fullface_pair") return Variant::fullface_pair;
    if (s == "landmark_single") return Variant::landmark_single;
    if (s == "landmark_combined") return Variant::landmark_combined;
    throw ConfigError("unknown model variant '" + s + "'");
}

inline const char* to_string(Combine c) { return c == Combine::concat ? "concat" : "absdiff"; }

inline Combine parse_combine(const std::string& s) {
    if (s == "concat") return Combine::concat;
    if (s == "absdiff") return Combine::absdiff;
    throw ConfigError("unknown branch combination '" + s + "'");
}

struct ModelConfig {
    Variant variant = Variant::fullface_pair;
    std::size_t height = 14, width = 14, channels = 8;
    std::size_t conv_width = 32;
    double block_dropout = 0.25;
    std::size_t head_width = 512;
    double head_dropout = 0.5;
    Combine combine = Combine::concat;
    nn::Padding padding = nn::Padding::same;

    /// Architecture defaults per variant: 32 filters and a 512-wide head for
    /// the full-face model, 64 filters for the landmark trunks.
    static ModelConfig defaults(Variant v, std::size_t h = 14, std::size_t w = 14, std::size_t c = 8) {
        ModelConfig cfg;
        cfg.variant = v;
        cfg.height = h;
        cfg.width = w;
        cfg.channels = c;
        cfg.conv_width = v == Variant::fullface_pair ? 32 : 64;
        return cfg;
    }

    std::size_t streams() const { return variant == Variant::landmark_combined ? 3 : 1; }
    Shape input_shape() const { return {height, width, channels}; }

    void validate() const {
        if (height == 0 || width == 0 || channels == 0) throw ConfigError("input shape must be positive");
        if (conv_width == 0) throw ConfigError("conv width must be positive");
        if (variant == Variant::fullface_pair && head_width == 0) throw ConfigError("head width must be positive");
        for (double r : {block_dropout, head_dropout})
            if (!(r >= 0.0 && r < 1.0)) throw ConfigError("dropout rates must lie in [0,1)");
    }
};

/// One batch of pair inputs: per stream, a (B,H,W,C) tensor for each side.
template <class T>
struct PairInput {
    std::vector<Tensor<T>> left;
    std::vector<Tensor<T>> right;

    std::size_t batch() const { return left.empty() ? 0 : left.front().dim(0); }
};

template <class T>
struct PairCache {
    std::vector<nn::SeqCache<T>> left, right;
    Shape trunk_out;
    std::vector<std::size_t> widths;
    std::vector<Tensor<T>> diff_sign;
    nn::SeqCache<T> head;
    bool logits = false;
};

/// Siamese pair classifier. Each stream owns one trunk that is applied to the
/// left and the right input alike, so the two branches share a single
/// parameter set. Branch outputs are flattened and joined before the head.
template <class T>
class PairModel {
public:
    PairModel() = default;

    explicit PairModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        for (std::size_t s = 0; s < cfg_.streams(); ++s) trunks_.push_back(make_trunk());
        const Shape out = trunks_.front().output_shape({1, cfg_.height, cfg_.width, cfg_.channels});
        trunk_out_ = {out[1], out[2], out[3]};
        const std::size_t F = shape_size(trunk_out_);
        const std::size_t joined = cfg_.combine == Combine::concat ? 2 * F * cfg_.streams() : F * cfg_.streams();
        if (cfg_.variant == Variant::fullface_pair) {
            head_.template add<nn::Dense<T>>(joined, cfg_.head_width);
            head_.template add<nn::ReLU<T>>();
            head_.template add<nn::Dropout<T>>(cfg_.head_dropout);
            head_.template add<nn::Dense<T>>(cfg_.head_width, 1);
        } else {
            head_.template add<nn::Dense<T>>(joined, 1);
        }
        head_.template add<nn::Sigmoid<T>>();
    }

    const ModelConfig& config() const { return cfg_; }
    const Shape& trunk_output_shape() const { return trunk_out_; }
    std::size_t embedding_size() const { return shape_size(trunk_out_); }

    void init(std::uint64_t seed) {
        Prng rng(seed);
        for (auto& t : trunks_) t.init(rng);
        head_.init(rng);
    }

    nn::Sequential<T>& trunk(std::size_t s = 0) { return trunks_.at(s); }
    nn::Sequential<T>& head() { return head_; }

    std::vector<std::pair<std::string, nn::Param<T>*>> named_params() {
        std::vector<std::pair<std::string, nn::Param<T>*>> out;
        for (std::size_t s = 0; s < trunks_.size(); ++s) {
            std::size_t k = 0;
            for (auto* p : trunks_[s].params()) out.emplace_back("trunk" + std::to_string(s) + "/" + std::to_string(k++) + "/" + p->name, p);
        }
        std::size_t k = 0;
        for (auto* p : head_.params()) out.emplace_back("head/" + std::to_string(k++) + "/" + p->name, p);
        return out;
    }

    std::vector<nn::Param<T>*> params() {
        std::vector<nn::Param<T>*> out;
        for (auto& [n, p] : named_params()) out.push_back(p);
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>*>> named_buffers() {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        for (std::size_t s = 0; s < trunks_.size(); ++s) {
            std::size_t k = 0;
            for (auto& [n, b] : trunks_[s].buffers()) out.emplace_back("trunk" + std::to_string(s) + "/" + std::to_string(k++) + "/" + n, b);
        }
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (auto* p : params()) n += p->value.size();
        return n;
    }

    void zero_grad() {
        for (auto* p : params()) p->zero_grad();
    }

    /// Probabilities (B,1) that the right subject is the ENT, or logits when
    /// `logits` is set.
    Tensor<T> forward(const PairInput<T>& in, nn::Mode mode, Prng& rng, PairCache<T>* cache, bool logits = false) {
        check_input(in);
        const std::size_t S = cfg_.streams();
        const std::size_t B = in.batch();
        const std::size_t F = embedding_size();
        if (cache) {
            cache->left.resize(S);
            cache->right.resize(S);
            cache->widths.clear();
            cache->diff_sign.clear();
            cache->trunk_out = trunk_out_;
            cache->logits = logits;
        }
        std::vector<Tensor<T>> lf, rf;
        for (std::size_t s = 0; s < S; ++s) {
            lf.push_back(trunks_[s].forward(in.left[s], mode, rng, cache ? &cache->left[s] : nullptr).reshaped({B, F}));
            rf.push_back(trunks_[s].forward(in.right[s], mode, rng, cache ? &cache->right[s] : nullptr).reshaped({B, F}));
        }
        std::vector<const Tensor<T>*> parts;
        std::vector<Tensor<T>> diffs;
        if (cfg_.combine == Combine::concat) {
            for (auto& t : lf) parts.push_back(&t);
            for (auto& t : rf) parts.push_back(&t);
        } else {
            for (std::size_t s = 0; s < S; ++s) {
                Tensor<T> d({B, F}), sign({B, F});
                for (std::size_t i = 0; i < d.size(); ++i) {
                    const T v = lf[s][i] - rf[s][i];
                    d[i] = std::abs(v);
                    sign[i] = v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0});
                }
                diffs.push_back(std::move(d));
                if (cache) cache->diff_sign.push_back(std::move(sign));
            }
            for (auto& t : diffs) parts.push_back(&t);
        }
        Tensor<T> joined = nn::Concat<T>::forward(parts, cache ? &cache->widths : nullptr);
        const std::size_t end = logits ? head_.size() - 1 : head_.size();
        return head_.forward(joined, mode, rng, cache ? &cache->head : nullptr, end);
    }

    /// Back-propagates d(loss)/d(output); returns input gradients when requested.
    PairInput<T> backward(const PairCache<T>& cache, const Tensor<T>& grad_out, bool need_input_grad = false) {
        const std::size_t S = cfg_.streams();
        if (cache.left.size() != S || cache.head.empty()) throw StateError("pair model backward without cached forward");
        Tensor<T> g = head_.backward(cache.head, grad_out);
        auto pieces = nn::Concat<T>::backward(g, cache.widths);
        const std::size_t B = g.dim(0);
        Shape tshape{B, trunk_out_[0], trunk_out_[1], trunk_out_[2]};
        PairInput<T> grads;
        for (std::size_t s = 0; s < S; ++s) {
            Tensor<T> gl, gr;
            if (cfg_.combine == Combine::concat) {
                gl = std::move(pieces[s]);
                gr = std::move(pieces[S + s]);
            } else {
                gl = Tensor<T>(pieces[s].shape());
                gr = Tensor<T>(pieces[s].shape());
                for (std::size_t i = 0; i < gl.size(); ++i) {
                    gl[i] = pieces[s][i] * cache.diff_sign[s][i];
                    gr[i] = -gl[i];
                }
            }
            auto dl = trunks_[s].backward(cache.left[s], gl.reshaped(tshape), need_input_grad);
            auto dr = trunks_[s].backward(cache.right[s], gr.reshaped(tshape), need_input_grad);
            if (need_input_grad) {
                grads.left.push_back(std::move(dl));
                grads.right.push_back(std::move(dr));
            }
        }
        return grads;
    }

    /// Eval-mode forward; eval mode never mutates layer state.
    Tensor<T> predict(const PairInput<T>& in, bool logits = false) const {
        Prng unused(0);
        return const_cast<PairModel*>(this)->forward(in, nn::Mode::eval, unused, nullptr, logits);
    }

    /// Eval-mode trunk output of stream `s`, flattened to (B, F).
    Tensor<T> embed(const Tensor<T>& x, std::size_t s = 0) const {
        Prng unused(0);
        auto& trunk = const_cast<nn::Sequential<T>&>(trunks_.at(s));
        Tensor<T> z = trunk.forward(x, nn::Mode::eval, unused, nullptr);
        return z.reshaped({x.dim(0), embedding_size()});
    }

    std::uint64_t pattern(const PairCache<T>& cache) const {
        std::uint64_t h = 0;
        for (std::size_t s = 0; s < trunks_.size(); ++s) {
            h = nn::detail::hash_combine(h, trunks_[s].pattern(cache.left[s]));
            h = nn::detail::hash_combine(h, trunks_[s].pattern(cache.right[s]));
        }
        std::uint64_t signs = 0;
        for (const auto& t : cache.diff_sign)
            for (std::size_t i = 0; i < t.size(); ++i) signs = nn::detail::hash_combine(signs, t[i] > T{0} ? 1 : (t[i] < T{0} ? 2 : 3));
        return nn::detail::hash_combine(nn::detail::hash_combine(h, signs), head_.pattern(cache.head));
    }

private:
    nn::Sequential<T> make_trunk() const {
        nn::Sequential<T> t;
        const std::size_t w = cfg_.conv_width;
        if (cfg_.variant == Variant::fullface_pair) {
            t.template add<nn::Conv2d<T>>(cfg_.channels, w, cfg_.padding);
            t.template add<nn::ReLU<T>>();
            t.template add<nn::Conv2d<T>>(w, w, cfg_.padding);
            t.template add<nn::ReLU<T>>();
            t.template add<nn::BatchNorm<T>>(w);
            t.template add<nn::Dropout<T>>(cfg_.block_dropout);
        } else {
            for (std::size_t m = 0; m < 2; ++m) {
                t.template add<nn::Conv2d<T>>(m == 0 ? cfg_.channels : w, w, cfg_.padding);
                t.template add<nn::BatchNorm<T>>(w);
                t.template add<nn::ReLU<T>>();
                t.template add<nn::Dropout<T>>(cfg_.block_dropout);
            }
            t.template add<nn::MaxPool2x2<T>>();
        }
        return t;
    }

    void check_input(const PairInput<T>& in) const {
        const std::size_t S = cfg_.streams();
        if (in.left.size() != S || in.right.size() != S)
            throw ShapeError("pair model expects " + std::to_string(S) + " input stream(s) per side");
        const std::size_t B = in.batch();
        for (const auto* side : {&in.left, &in.right})
            for (const auto& t : *side)
                if (t.shape() != Shape{B, cfg_.height, cfg_.width, cfg_.channels})
                    throw ShapeError("pair model input " + shape_str(t.shape()) + " does not match configured " +
                                     shape_str({B, cfg_.height, cfg_.width, cfg_.channels}));
    }

    ModelConfig cfg_;
    std::vector<nn::Sequential<T>> trunks_;
    nn::Sequential<T> head_;
    Shape trunk_out_;
};

/// Convert parameters and buffers between scalar types (same architecture).
template <class To, class From>
PairModel<To> convert(PairModel<From>& src) {
    PairModel<To> dst(src.config());
    auto sp = src.named_params();
    auto dp = dst.named_params();
    for (std::size_t i = 0; i < sp.size(); ++i) dp[i].second->value = sp[i].second->value.template cast<To>();
    auto sb = src.named_buffers();
    auto db = dst.named_buffers();
    for (std::size_t i = 0; i < sb.size(); ++i) *db[i].second = sb[i].second->template cast<To>();
    return dst;
}

} // namespace pairclf::model

#endif // PAIRCLF_MODEL_PAIR_MODEL_HPP
