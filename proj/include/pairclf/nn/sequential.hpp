#ifndef PAIRCLF_NN_SEQUENTIAL_HPP
#define PAIRCLF_NN_SEQUENTIAL_HPP

#include <memory>
#include <utility>
#include <vector>

#include "pairclf/nn/layers.hpp"

namespace pairclf::nn {

template <class T>
using SeqCache = std::vector<LayerCache<T>>;

/// Ordered stack of single-input layers.
template <class T>
class Sequential {
public:
    Sequential() = default;
    Sequential(const Sequential& other) {
        for (const auto& l : other.layers_) layers_.push_back(l->clone());
    }
    Sequential& operator=(const Sequential& other) {
        if (this != &other) {
            Sequential tmp(other);
            layers_ = std::move(tmp.layers_);
        }
        return *this;
    }
    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    template <class L, class... Args>
    L& add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    std::size_t size() const { return layers_.size(); }
    Layer<T>& operator[](std::size_t i) { return *layers_[i]; }
    const Layer<T>& operator[](std::size_t i) const { return *layers_[i]; }

    Shape output_shape(Shape in) const {
        for (const auto& l : layers_) in = l->output_shape(in);
        return in;
    }

    /// Runs layers [0, end); `end` defaults to all of them.
    Tensor<T> forward(const Tensor<T>& x, Mode mode, Prng& rng, SeqCache<T>* cache,
                      std::size_t end = static_cast<std::size_t>(-1)) {
        end = std::min(end, layers_.size());
        if (cache) {
            // Entries are reset but keep their buffers, which layers may reuse.
            cache->resize(end);
            for (auto& c : *cache) c.valid = false;
        }
        Tensor<T> h = x;
        for (std::size_t i = 0; i < end; ++i) h = layers_[i]->forward(h, mode, rng, cache ? &(*cache)[i] : nullptr);
        return h;
    }

    Tensor<T> backward(const SeqCache<T>& cache, Tensor<T> grad, bool need_input_grad = true) {
        if (cache.size() > layers_.size()) throw StateError("sequential backward: cache longer than layer stack");
        if (cache.empty()) return grad;
        for (std::size_t i = cache.size(); i-- > 0;) grad = layers_[i]->backward(cache[i], grad, need_input_grad || i > 0);
        return grad;
    }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> out;
        for (auto& l : layers_)
            for (auto* p : l->params()) out.push_back(p);
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>*>> buffers() {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        for (auto& l : layers_)
            for (auto& b : l->buffers()) out.push_back(b);
        return out;
    }

    void init(Prng& rng) {
        for (auto& l : layers_) l->init(rng);
    }

    std::uint64_t pattern(const SeqCache<T>& cache) const {
        std::uint64_t h = 0;
        for (std::size_t i = 0; i < cache.size(); ++i) h = detail::hash_combine(h, layers_[i]->pattern(cache[i]));
        return h;
    }

private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

} // namespace pairclf::nn

#endif // PAIRCLF_NN_SEQUENTIAL_HPP
