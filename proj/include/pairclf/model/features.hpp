#ifndef PAIRCLF_MODEL_FEATURES_HPP
#define PAIRCLF_MODEL_FEATURES_HPP

#include <span>
#include <string>
#include <vector>

#include "pairclf/data/manifest.hpp"
#include "pairclf/data/mask.hpp"
#include "pairclf/data/pairing.hpp"
#include "pairclf/model/pair_model.hpp"

namespace pairclf::model {

/// A pair resolved to dataset indices.
struct IndexedPair {
    std::size_t left = 0;
    std::size_t right = 0;
    int target = 0;
};

inline std::vector<IndexedPair> resolve(const data::Dataset& ds, const std::vector<data::PairSample>& pairs) {
    std::vector<IndexedPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back({ds.index_of(p.left_id), ds.index_of(p.right_id), p.target});
    return out;
}

/// Per-stream model inputs for every subject: raw features for the full-face
/// model, landmark-masked copies for the landmark models.
class FeatureBank {
public:
    static FeatureBank raw(const data::Dataset& ds) {
        FeatureBank b;
        b.streams_.push_back(ds.features);
        b.shape_ = ds.feature_shape;
        return b;
    }

    /// One stream per entry of `stream_regions`; each stream keeps only the
    /// named regions of every subject.
    static FeatureBank masked(const data::Dataset& ds, const std::vector<std::vector<std::string>>& stream_regions) {
        FeatureBank b;
        b.shape_ = ds.feature_shape;
        for (const auto& names : stream_regions) {
            std::vector<Tensor<float>> s;
            s.reserve(ds.subjects.size());
            for (std::size_t i = 0; i < ds.subjects.size(); ++i)
                s.push_back(data::mask_landmarks(ds.features[i], data::region_rects(ds.subjects[i], names)));
            b.streams_.push_back(std::move(s));
        }
        return b;
    }

    static FeatureBank from_streams(std::vector<std::vector<Tensor<float>>> streams) {
        FeatureBank b;
        b.shape_ = streams.at(0).at(0).shape();
        b.streams_ = std::move(streams);
        return b;
    }

    std::size_t streams() const { return streams_.size(); }
    std::size_t subjects() const { return streams_.empty() ? 0 : streams_[0].size(); }
    const Shape& shape() const { return shape_; }
    const Tensor<float>& at(std::size_t stream, std::size_t subject) const { return streams_[stream][subject]; }
    Tensor<float>& at(std::size_t stream, std::size_t subject) { return streams_[stream][subject]; }

    /// Batched input for pairs[order[begin..end)]; `swap` exchanges the sides.
    PairInput<float> batch(std::span<const IndexedPair> pairs, std::span<const std::size_t> order, std::size_t begin,
                           std::size_t end, bool swap = false) const {
        PairInput<float> in;
        const std::size_t B = end - begin, n = shape_size(shape_);
        Shape bs{B};
        bs.insert(bs.end(), shape_.begin(), shape_.end());
        for (std::size_t s = 0; s < streams_.size(); ++s) {
            Tensor<float> l(bs), r(bs);
            for (std::size_t i = 0; i < B; ++i) {
                const auto& p = pairs[order.empty() ? begin + i : order[begin + i]];
                const auto& a = streams_[s][swap ? p.right : p.left];
                const auto& c = streams_[s][swap ? p.left : p.right];
                std::copy(a.ptr(), a.ptr() + n, l.ptr() + i * n);
                std::copy(c.ptr(), c.ptr() + n, r.ptr() + i * n);
            }
            in.left.push_back(std::move(l));
            in.right.push_back(std::move(r));
        }
        return in;
    }

    void check_compatible(const ModelConfig& cfg) const {
        if (streams_.size() != cfg.streams())
            throw ShapeError("model expects " + std::to_string(cfg.streams()) + " stream(s), features provide " +
                             std::to_string(streams_.size()));
        if (shape_ != cfg.input_shape())
            throw ShapeError("feature shape " + shape_str(shape_) + " does not match model input " +
                             shape_str(cfg.input_shape()));
    }

private:
    std::vector<std::vector<Tensor<float>>> streams_;
    Shape shape_;
};

/// Raw features when `streams` is empty, otherwise one stream per named
/// landmark with everything outside that region masked out.
inline FeatureBank make_bank(const data::Dataset& ds, const std::vector<std::string>& streams) {
    if (streams.empty()) return FeatureBank::raw(ds);
    std::vector<std::vector<std::string>> per;
    for (const auto& s : streams) per.push_back({s});
    return FeatureBank::masked(ds, per);
}

} // namespace pairclf::model

#endif // PAIRCLF_MODEL_FEATURES_HPP
