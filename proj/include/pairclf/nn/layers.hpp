#ifndef PAIRCLF_NN_LAYERS_HPP
#define PAIRCLF_NN_LAYERS_HPP

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pairclf/core/error.hpp"
#include "pairclf/core/prng.hpp"
#include "pairclf/core/tensor.hpp"

namespace pairclf::nn {

enum class Mode { train, eval };

enum class LayerKind { conv2d, batchnorm, relu, sigmoid, dropout, maxpool2x2, dense, flatten, concat };

inline const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::relu: return "relu";
        case LayerKind::sigmoid: return "sigmoid";
        case LayerKind::dropout: return "dropout";
        case LayerKind::maxpool2x2: return "maxpool2x2";
        case LayerKind::dense: return "dense";
        case LayerKind::flatten: return "flatten";
        case LayerKind::concat: return "concat";
    }
    return "?";
}

enum class Padding { same, valid };

template <class T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    /// Set by zero_grad(): the next backward overwrites `grad` instead of adding to it.
    bool grad_stale = false;

    Param() = default;
    Param(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad_stale = true; }

    /// Gradient storage ready for accumulation.
    Tensor<T>& grad_acc() {
        if (grad_stale) {
            grad.fill(T{0});
            grad_stale = false;
        }
        return grad;
    }
};

/// State a layer keeps between its forward and backward pass.
template <class T>
struct LayerCache {
    bool valid = false;
    Mode mode = Mode::train;
    Shape in_shape;
    std::vector<Tensor<T>> saved;
    std::vector<std::uint32_t> index;
};

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
class Layer {
public:
    virtual ~Layer() = default;

    virtual LayerKind kind() const = 0;
    virtual std::unique_ptr<Layer> clone() const = 0;

    /// Batched output shape for a batched input shape; throws ShapeError.
    virtual Shape output_shape(const Shape& in) const = 0;

    /// `cache` may be null when no backward pass follows.
    virtual Tensor<T> forward(const Tensor<T>& x, Mode mode, Prng& rng, LayerCache<T>* cache) = 0;

    /// Accumulates parameter gradients and returns the input gradient
    /// (an empty tensor when `need_input_grad` is false).
    virtual Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& grad_out, bool need_input_grad = true) = 0;

    virtual std::vector<Param<T>*> params() { return {}; }

    /// Non-trainable state that must be serialized (batchnorm running statistics).
    virtual std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return {}; }

    virtual void init(Prng&) {}

    /// Hash of the piecewise-linear branch taken (relu signs, pool argmax).
    virtual std::uint64_t pattern(const LayerCache<T>&) const { return 0; }

protected:
    static void require_cache(const LayerCache<T>& c, const char* who) {
        if (!c.valid) throw StateError(std::string(who) + ": backward without cached forward state");
    }
};

namespace detail {

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) { return Prng::mix(h ^ (v + 0x9e3779b97f4a7c15ULL)); }

template <class T>
void glorot_uniform(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Prng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-limit, limit));
}

} // namespace detail

/// 3x3 convolution, stride 1, NHWC input, HWIO weights.
template <class T>
class Conv2d final : public Layer<T> {
public:
    Conv2d(std::size_t in_channels, std::size_t filters, Padding padding = Padding::same)
        : in_(in_channels), out_(filters), padding_(padding),
          weight_("kernel", Tensor<T>({3, 3, in_channels, filters})), bias_("bias", Tensor<T>({filters})) {
        if (in_channels == 0 || filters == 0) throw ConfigError("conv2d channels must be positive");
    }

    LayerKind kind() const override { return LayerKind::conv2d; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 4 || in[3] != in_)
            throw ShapeError("conv2d expects (B,H,W," + std::to_string(in_) + "), got " + shape_str(in));
        if (padding_ == Padding::valid) {
            if (in[1] < 3 || in[2] < 3) throw ShapeError("conv2d valid padding needs H,W >= 3");
            return {in[0], in[1] - 2, in[2] - 2, out_};
        }
        return {in[0], in[1], in[2], out_};
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Prng&, LayerCache<T>* cache) override {
        const Shape os = output_shape(x.shape());
        const std::size_t rows = os[0] * os[1] * os[2];
        Tensor<T> col = im2col(x, os, cache && !cache->saved.empty() ? &cache->saved[0] : nullptr);
        Tensor<T> y(os);
        MatMap<T> ym(y.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out_));
        ym.noalias() = colmap(col, rows) * weight_map();
        ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.value.ptr(), static_cast<Eigen::Index>(out_));
        if (cache) {
            cache->valid = true;
            cache->mode = mode;
            cache->in_shape = x.shape();
            cache->saved.resize(1);
            cache->saved[0] = std::move(col);
        }
        return y;
    }

    Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& gy, bool need_input_grad = true) override {
        this->require_cache(cache, "conv2d");
        const Shape os = output_shape(cache.in_shape);
        if (gy.shape() != os) throw ShapeError("conv2d backward: gradient shape mismatch");
        const std::size_t rows = os[0] * os[1] * os[2];
        ConstMatMap<T> g(gy.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out_));
        const auto col = colmap(cache.saved[0], rows);
        MatMap<T> dw(weight_.grad.ptr(), static_cast<Eigen::Index>(9 * in_), static_cast<Eigen::Index>(out_));
        if (weight_.grad_stale) dw.noalias() = col.transpose() * g;
        else dw.noalias() += col.transpose() * g;
        weight_.grad_stale = false;
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_.grad_acc().ptr(), static_cast<Eigen::Index>(out_));
        db += g.colwise().sum();
        if (!need_input_grad) return {};
        Tensor<T> dcol({rows, 9 * in_});
        MatMap<T>(dcol.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(9 * in_)).noalias() =
            g * weight_map().transpose();
        return col2im(dcol, cache.in_shape, os);
    }

    std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

    void init(Prng& rng) override {
        detail::glorot_uniform(weight_.value, 9 * in_, 9 * out_, rng);
        bias_.value.fill(T{0});
    }

    std::size_t in_channels() const { return in_; }
    std::size_t filters() const { return out_; }
    Padding padding() const { return padding_; }
    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

private:
    ConstMatMap<T> weight_map() const {
        return ConstMatMap<T>(weight_.value.ptr(), static_cast<Eigen::Index>(9 * in_), static_cast<Eigen::Index>(out_));
    }

    ConstMatMap<T> colmap(const Tensor<T>& col, std::size_t rows) const {
        return ConstMatMap<T>(col.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(9 * in_));
    }

    // Offset of the kernel's top-left tap relative to the output pixel.
    std::ptrdiff_t offset() const { return padding_ == Padding::same ? -1 : 0; }

    // Reuses `reuse` when it already has the right shape; padded taps are
    // zeroed explicitly, so stale contents never leak through.
    Tensor<T> im2col(const Tensor<T>& x, const Shape& os, Tensor<T>* reuse) const {
        const std::size_t B = os[0], Ho = os[1], Wo = os[2], H = x.dim(1), W = x.dim(2), C = in_;
        const Shape cs{B * Ho * Wo, 9 * C};
        Tensor<T> col = (reuse && reuse->shape() == cs) ? std::move(*reuse) : Tensor<T>(cs);
        const T* src = x.ptr();
        T* dst = col.ptr();
        const std::ptrdiff_t off = offset();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t oy = 0; oy < Ho; ++oy)
                for (std::size_t ox = 0; ox < Wo; ++ox) {
                    T* row = dst + ((b * Ho + oy) * Wo + ox) * 9 * C;
                    for (std::size_t ky = 0; ky < 3; ++ky) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) + off;
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) + off;
                            T* tap = row + (ky * 3 + kx) * C;
                            if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(H) || ix >= static_cast<std::ptrdiff_t>(W)) {
                                std::fill(tap, tap + C, T{0});
                                continue;
                            }
                            const T* px = src + ((b * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)) * C;
                            std::copy(px, px + C, tap);
                        }
                    }
                }
        return col;
    }

    Tensor<T> col2im(const Tensor<T>& dcol, const Shape& in, const Shape& os) const {
        const std::size_t B = os[0], Ho = os[1], Wo = os[2], H = in[1], W = in[2], C = in_;
        Tensor<T> dx(in);
        T* dst = dx.ptr();
        const T* src = dcol.ptr();
        const std::ptrdiff_t off = offset();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t oy = 0; oy < Ho; ++oy)
                for (std::size_t ox = 0; ox < Wo; ++ox) {
                    const T* row = src + ((b * Ho + oy) * Wo + ox) * 9 * C;
                    for (std::size_t ky = 0; ky < 3; ++ky) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) + off;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) + off;
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                            const T* tap = row + (ky * 3 + kx) * C;
                            T* px = dst + ((b * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)) * C;
                            for (std::size_t c = 0; c < C; ++c) px[c] += tap[c];
                        }
                    }
                }
        return dx;
    }

    std::size_t in_;
    std::size_t out_;
    Padding padding_;
    Param<T> weight_;
    Param<T> bias_;
};

/// Per-channel batch normalization over every axis but the last.
template <class T>
class BatchNorm final : public Layer<T> {
public:
    explicit BatchNorm(std::size_t channels, double eps = 1e-3, double momentum = 0.99)
        : channels_(channels), eps_(eps), momentum_(momentum),
          gamma_("gamma", Tensor<T>({channels}, T{1})), beta_("beta", Tensor<T>({channels})),
          running_mean_({channels}), running_var_({channels}, T{1}), ready_({1}) {}

    LayerKind kind() const override { return LayerKind::batchnorm; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNorm>(*this); }

    Shape output_shape(const Shape& in) const override {
        if (in.size() < 2 || in.back() != channels_)
            throw ShapeError("batchnorm expects last axis " + std::to_string(channels_) + ", got " + shape_str(in));
        return in;
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Prng&, LayerCache<T>* cache) override {
        output_shape(x.shape());
        const std::size_t C = channels_, N = x.size() / C;
        std::vector<T> mean(C), inv_std(C);
        if (mode == Mode::train) {
            std::vector<double> s(C, 0.0), ss(C, 0.0);
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t c = 0; c < C; ++c) s[c] += static_cast<double>(x[i * C + c]);
            for (std::size_t c = 0; c < C; ++c) s[c] /= static_cast<double>(N);
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t c = 0; c < C; ++c) {
                    const double d = static_cast<double>(x[i * C + c]) - s[c];
                    ss[c] += d * d;
                }
            for (std::size_t c = 0; c < C; ++c) {
                const double var = ss[c] / static_cast<double>(N);
                mean[c] = static_cast<T>(s[c]);
                inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + eps_));
                running_mean_[c] = static_cast<T>(momentum_ * running_mean_[c] + (1.0 - momentum_) * s[c]);
                running_var_[c] = static_cast<T>(momentum_ * running_var_[c] + (1.0 - momentum_) * var);
            }
            ready_[0] = T{1};
        } else {
            if (!stats_ready())
                throw StateError("batchnorm eval-mode forward before any train-mode update of running statistics");
            for (std::size_t c = 0; c < C; ++c) {
                mean[c] = running_mean_[c];
                inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var_[c]) + eps_));
            }
        }
        Tensor<T> y(x.shape());
        Tensor<T> xhat(x.shape());
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t c = 0; c < C; ++c) {
                const T h = (x[i * C + c] - mean[c]) * inv_std[c];
                xhat[i * C + c] = h;
                y[i * C + c] = gamma_.value[c] * h + beta_.value[c];
            }
        if (cache) {
            cache->valid = true;
            cache->mode = mode;
            cache->in_shape = x.shape();
            cache->saved = {std::move(xhat), Tensor<T>({C}, std::move(inv_std))};
        }
        return y;
    }

    Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& gy, bool need_input_grad = true) override {
        this->require_cache(cache, "batchnorm");
        if (gy.shape() != cache.in_shape) throw ShapeError("batchnorm backward: gradient shape mismatch");
        const Tensor<T>& xhat = cache.saved[0];
        const Tensor<T>& inv_std = cache.saved[1];
        const std::size_t C = channels_, N = gy.size() / C;
        std::vector<T> dgamma(C, T{0}), dbeta(C, T{0});
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t c = 0; c < C; ++c) {
                dgamma[c] += gy[i * C + c] * xhat[i * C + c];
                dbeta[c] += gy[i * C + c];
            }
        auto& gg = gamma_.grad_acc();
        auto& bg = beta_.grad_acc();
        for (std::size_t c = 0; c < C; ++c) {
            gg[c] += dgamma[c];
            bg[c] += dbeta[c];
        }
        if (!need_input_grad) return {};
        Tensor<T> dx(gy.shape());
        if (cache.mode == Mode::eval) {
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t c = 0; c < C; ++c) dx[i * C + c] = gy[i * C + c] * gamma_.value[c] * inv_std[c];
            return dx;
        }
        const T n = static_cast<T>(N);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t k = i * C + c;
                dx[k] = gamma_.value[c] * inv_std[c] / n * (n * gy[k] - dbeta[c] - xhat[k] * dgamma[c]);
            }
        return dx;
    }

    std::vector<Param<T>*> params() override { return {&gamma_, &beta_}; }

    std::vector<std::pair<std::string, Tensor<T>*>> buffers() override {
        return {{"moving_mean", &running_mean_}, {"moving_variance", &running_var_}, {"stats_ready", &ready_}};
    }

    void init(Prng&) override {
        gamma_.value.fill(T{1});
        beta_.value.fill(T{0});
        running_mean_.fill(T{0});
        running_var_.fill(T{1});
        ready_.fill(T{0});
    }

    bool stats_ready() const { return ready_[0] != T{0}; }
    std::size_t channels() const { return channels_; }
    Param<T>& gamma() { return gamma_; }
    Param<T>& beta() { return beta_; }
    const Tensor<T>& running_mean() const { return running_mean_; }
    const Tensor<T>& running_var() const { return running_var_; }

private:
    std::size_t channels_;
    double eps_;
    double momentum_;
    Param<T> gamma_;
    Param<T> beta_;
    Tensor<T> running_mean_;
    Tensor<T> running_var_;
    Tensor<T> ready_;
};

template <class T>
class ReLU final : public Layer<T> {
public:
    LayerKind kind() const override { return LayerKind::relu; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReLU>(*this); }
    Shape output_shape(const Shape& in) const override { return in; }

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Prng&, LayerCache<T>* cache) override {
        Tensor<T> y(x.shape());
        const T* __restrict xp = x.ptr();
        T* __restrict yp = y.ptr();
        for (std::size_t i = 0, n = x.size(); i < n; ++i) yp[i] = xp[i] > T{0} ? xp[i] : T{0};
        if (cache) {
            cache->valid = true;
            cache->mode = mode;
            cache->in_shape = x.shape();
            cache->saved = {x};
        }
        return y;
    }

    Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& gy, bool = true) override {
        this->require_cache(cache, "relu");
        const Tensor<T>& x = cache.saved[0];
        if (gy.shape() != x.shape()) throw ShapeError("relu backward: gradient shape mismatch");
        Tensor<T> dx(x.shape());
        const T* __restrict xp = x.ptr();
        const T* __restrict gp = gy.ptr();
        T* __restrict dp = dx.ptr();
        for (std::size_t i = 0, n = x.size(); i < n; ++i) dp[i] = xp[i] > T{0} ? gp[i] : T{0};
        return dx;
    }

    std::uint64_t pattern(const LayerCache<T>& cache) const override {
        std::uint64_t h = 0x7265;
        std::uint64_t word = 0;
        const Tensor<T>& x = cache.saved[0];
        for (std::size_t i = 0; i < x.size(); ++i) {
            word = (word << 1) | (x[i] > T{0} ? 1u : 0u);
            if (i % 64 == 63) h = detail::hash_combine(h, word), word = 0;
        }
        return detail::hash_combine(h, word);
    }
};

template <class T>
class Sigmoid final : public Layer<T> {
public:
    LayerKind kind() const override { return LayerKind::sigmoid; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Sigmoid>(*this); }
    Shape output_shape(const Shape& in) const override { return in; }

    static T apply(T z) { return z >= T{0} ? T{1} / (T{1} + std::exp(-z)) : std::exp(z) / (T{1} + std::exp(z)); }

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Prng&, LayerCache<T>* cache) override {
        Tensor<T> y(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = apply(x[i]);
        if (cache) {
            cache->valid = true;
            cache->mode = mode;
            cache->in_shape = x.shape();
            cache->saved = {y};
        }
        return y;
    }

    Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& gy, bool = true) override {
        this->require_cache(cache, "sigmoid");
        const Tensor<T>& y = cache.saved[0];
        if (gy.shape() != y.shape()) throw ShapeError("sigmoid backward: gradient shape mismatch");
        Tensor<T> dx(y.shape());
        for (std::size_t i = 0; i < y.size(); ++i) dx[i] = gy[i] * y[i] * (T{1} - y[i]);
        return dx;
    }
};

/// Inverted dropout: survivors are scaled by 1/(1-rate) in train mode.
template <class T>
class Dropout final : public Layer<T> {
public:
    explicit Dropout(double rate) : rate_(rate) {
        if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }

    LayerKind kind() const override { return LayerKind::dropout; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dropout>(*this); }
    Shape output_shape(const Shape& in) const override { return in; }

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Prng& rng, LayerCache<T>* cache) override {
        Tensor<T> y = x;
        Tensor<T> scale;
        if (mode == Mode::train && rate_ > 0.0) {
            scale = Tensor<T>(x.shape());
            const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
            // Each 64-bit draw yields two 32-bit uniforms; unit i is dropped when
            // its uniform falls below rate * 2^32.
            const auto threshold = static_cast<std::uint64_t>(std::ldexp(rate_, 32));
            T* __restrict sp = scale.ptr();
            T* __restrict yp = y.ptr();
            std::uint64_t bits = 0;
            for (std::size_t i = 0, n = x.size(); i < n; ++i) {
                if (i % 2 == 0) bits = rng.next_u64();
                const std::uint64_t u = (i % 2 == 0) ? (bits & 0xffffffffULL) : (bits >> 32);
                sp[i] = u < threshold ? T{0} : keep_scale;
                yp[i] *= sp[i];
            }
        }
        if (cache) {
            cache->valid = true;
            cache->mode = mode;
            cache->in_shape = x.shape();
            cache->saved.clear();
            if (!scale.empty()) cache->saved.push_back(std::move(scale));
        }
        return y;
    }

    Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& gy, bool = true) override {
        this->require_cache(cache, "dropout");
        if (gy.shape() != cache.in_shape) throw ShapeError("dropout backward: gradient shape mismatch");
        if (cache.saved.empty()) return gy;
        Tensor<T> dx = gy;
        const Tensor<T>& scale = cache.saved[0];
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= scale[i];
        return dx;
    }

    double rate() const { return rate_; }

private:
    double rate_;
};

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
template <class T>
class MaxPool2x2 final : public Layer<T> {
public:
    LayerKind kind() const override { return LayerKind::maxpool2x2; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPool2x2>(*this); }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 4) throw ShapeError("maxpool2x2 expects (B,H,W,C), got " + shape_str(in));
        if (in[1] < 2 || in[2] < 2) throw ShapeError("input " + shape_str(in) + " too small for 2x2 max pooling");
        return {in[0], in[1] / 2, in[2] / 2, in[3]};
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Prng&, LayerCache<T>* cache) override {
        const Shape os = output_shape(x.shape());
        const std::size_t B = os[0], Ho = os[1], Wo = os[2], C = os[3], W = x.dim(2);
        Tensor<T> y(os);
        std::vector<std::uint32_t> arg(y.size());
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t oy = 0; oy < Ho; ++oy)
                for (std::size_t ox = 0; ox < Wo; ++ox)
                    for (std::size_t c = 0; c < C; ++c) {
                        std::size_t best = ((b * x.dim(1) + 2 * oy) * W + 2 * ox) * C + c;
                        for (std::size_t dy = 0; dy < 2; ++dy)
                            for (std::size_t dx = 0; dx < 2; ++dx) {
                                const std::size_t k = ((b * x.dim(1) + 2 * oy + dy) * W + 2 * ox + dx) * C + c;
                                if (x[k] > x[best]) best = k;
                            }
                        const std::size_t o = ((b * Ho + oy) * Wo + ox) * C + c;
                        y[o] = x[best];
                        arg[o] = static_cast<std::uint32_t>(best);
                    }
        if (cache) {
            cache->valid = true;
            cache->mode = mode;
            cache->in_shape = x.shape();
            cache->saved.clear();
            cache->index = std::move(arg);
        }
        return y;
    }

    Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& gy, bool = true) override {
        this->require_cache(cache, "maxpool2x2");
        if (gy.shape() != output_shape(cache.in_shape)) throw ShapeError("maxpool2x2 backward: gradient shape mismatch");
        Tensor<T> dx(cache.in_shape);
        for (std::size_t o = 0; o < gy.size(); ++o) dx[cache.index[o]] += gy[o];
        return dx;
    }

    std::uint64_t pattern(const LayerCache<T>& cache) const override {
        std::uint64_t h = 0x6d70;
        for (auto i : cache.index) h = detail::hash_combine(h, i);
        return h;
    }
};

/// Fully connected layer on (B, F) inputs.
template <class T>
class Dense final : public Layer<T> {
public:
    Dense(std::size_t in_features, std::size_t units)
        : in_(in_features), out_(units), weight_("kernel", Tensor<T>({in_features, units})),
          bias_("bias", Tensor<T>({units})) {}

    LayerKind kind() const override { return LayerKind::dense; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dense>(*this); }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 2 || in[1] != in_)
            throw ShapeError("dense expects (B," + std::to_string(in_) + "), got " + shape_str(in));
        return {in[0], out_};
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Prng&, LayerCache<T>* cache) override {
        const Shape os = output_shape(x.shape());
        const auto B = static_cast<Eigen::Index>(os[0]);
        Tensor<T> y(os);
        MatMap<T> ym(y.ptr(), B, static_cast<Eigen::Index>(out_));
        ym.noalias() = ConstMatMap<T>(x.ptr(), B, static_cast<Eigen::Index>(in_)) * weight_map();
        ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.value.ptr(), static_cast<Eigen::Index>(out_));
        if (cache) {
            cache->valid = true;
            cache->mode = mode;
            cache->in_shape = x.shape();
            cache->saved = {x};
        }
        return y;
    }

    Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& gy, bool need_input_grad = true) override {
        this->require_cache(cache, "dense");
        const Shape os = output_shape(cache.in_shape);
        if (gy.shape() != os) throw ShapeError("dense backward: gradient shape mismatch");
        const auto B = static_cast<Eigen::Index>(os[0]);
        ConstMatMap<T> g(gy.ptr(), B, static_cast<Eigen::Index>(out_));
        ConstMatMap<T> x(cache.saved[0].ptr(), B, static_cast<Eigen::Index>(in_));
        MatMap<T> dw(weight_.grad.ptr(), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(out_));
        if (weight_.grad_stale) dw.noalias() = x.transpose() * g;
        else dw.noalias() += x.transpose() * g;
        weight_.grad_stale = false;
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.grad_acc().ptr(), static_cast<Eigen::Index>(out_)) +=
            g.colwise().sum();
        if (!need_input_grad) return {};
        Tensor<T> dx(cache.in_shape);
        MatMap<T>(dx.ptr(), B, static_cast<Eigen::Index>(in_)).noalias() = g * weight_map().transpose();
        return dx;
    }

    std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

    void init(Prng& rng) override {
        detail::glorot_uniform(weight_.value, in_, out_, rng);
        bias_.value.fill(T{0});
    }

    std::size_t in_features() const { return in_; }
    std::size_t units() const { return out_; }
    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

private:
    ConstMatMap<T> weight_map() const {
        return ConstMatMap<T>(weight_.value.ptr(), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(out_));
    }

    std::size_t in_;
    std::size_t out_;
    Param<T> weight_;
    Param<T> bias_;
};

template <class T>
class Flatten final : public Layer<T> {
public:
    LayerKind kind() const override { return LayerKind::flatten; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Flatten>(*this); }

    Shape output_shape(const Shape& in) const override {
        if (in.size() < 2) throw ShapeError("flatten expects a batched tensor, got " + shape_str(in));
        return {in[0], shape_size(in) / in[0]};
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Prng&, LayerCache<T>* cache) override {
        if (cache) {
            cache->valid = true;
            cache->mode = mode;
            cache->in_shape = x.shape();
            cache->saved.clear();
        }
        return x.reshaped(output_shape(x.shape()));
    }

    Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& gy, bool = true) override {
        this->require_cache(cache, "flatten");
        if (gy.size() != shape_size(cache.in_shape)) throw ShapeError("flatten backward: gradient size mismatch");
        return gy.reshaped(cache.in_shape);
    }
};

/// Joins (B, F_i) tensors along the feature axis.
template <class T>
struct Concat {
    static constexpr LayerKind kind() { return LayerKind::concat; }

    static Tensor<T> forward(std::span<const Tensor<T>* const> parts, std::vector<std::size_t>* widths = nullptr) {
        if (parts.empty()) throw ShapeError("concat of zero tensors");
        const std::size_t B = parts.front()->dim(0);
        std::size_t total = 0;
        for (const auto* p : parts) {
            if (p->rank() != 2 || p->dim(0) != B) throw ShapeError("concat expects (B,F) tensors with equal B");
            total += p->dim(1);
        }
        Tensor<T> y({B, total});
        std::size_t off = 0;
        for (const auto* p : parts) {
            const std::size_t F = p->dim(1);
            for (std::size_t b = 0; b < B; ++b)
                std::copy(p->ptr() + b * F, p->ptr() + (b + 1) * F, y.ptr() + b * total + off);
            off += F;
            if (widths) widths->push_back(F);
        }
        return y;
    }

    static std::vector<Tensor<T>> backward(const Tensor<T>& gy, std::span<const std::size_t> widths) {
        const std::size_t B = gy.dim(0), total = gy.dim(1);
        std::vector<Tensor<T>> out;
        std::size_t off = 0;
        for (auto F : widths) {
            Tensor<T> g({B, F});
            for (std::size_t b = 0; b < B; ++b)
                std::copy(gy.ptr() + b * total + off, gy.ptr() + b * total + off + F, g.ptr() + b * F);
            out.push_back(std::move(g));
            off += F;
        }
        if (off != total) throw ShapeError("concat backward: widths do not cover gradient");
        return out;
    }
};

} // namespace pairclf::nn

#endif // PAIRCLF_NN_LAYERS_HPP
