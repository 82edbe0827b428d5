#ifndef PAIRCLF_DATA_MASK_HPP
#define PAIRCLF_DATA_MASK_HPP

#include <span>
#include <vector>

#include "pairclf/core/error.hpp"
#include "pairclf/core/tensor.hpp"
#include "pairclf/data/manifest.hpp"

namespace pairclf::data {

/// Keeps grid cells inside the union of `rects` (every channel) and zeroes the rest.
template <class T>
Tensor<T> mask_landmarks(const Tensor<T>& t, std::span<const Rect> rects) {
    if (t.rank() != 3) throw ShapeError("mask_landmarks expects an H x W x C tensor, got " + shape_str(t.shape()));
    const std::size_t H = t.dim(0), W = t.dim(1), C = t.dim(2);
    for (const auto& r : rects)
        if (!r.fits(H, W))
            throw ShapeError("mask rectangle " + std::to_string(r.r0) + ":" + std::to_string(r.r1) + ":" +
                             std::to_string(r.c0) + ":" + std::to_string(r.c1) + " outside " + shape_str(t.shape()));
    Tensor<T> out(t.shape());
    for (const auto& r : rects)
        for (std::size_t y = r.r0; y < r.r1; ++y)
            for (std::size_t x = r.c0; x < r.c1; ++x)
                for (std::size_t c = 0; c < C; ++c) out[(y * W + x) * C + c] = t[(y * W + x) * C + c];
    return out;
}

template <class T>
Tensor<T> mask_landmarks(const Tensor<T>& t, const std::vector<Rect>& rects) {
    return mask_landmarks(t, std::span<const Rect>(rects));
}

/// Rectangles of the named regions of one subject; throws ProtocolError when one is missing.
inline std::vector<Rect> region_rects(const SubjectRecord& s, std::span<const std::string> names) {
    std::vector<Rect> out;
    for (const auto& n : names) {
        const Region* r = s.find_region(n);
        if (!r) throw ProtocolError("subject '" + s.subject_id + "' has no region named '" + n + "'");
        out.push_back(r->rect);
    }
    return out;
}

} // namespace pairclf::data

#endif // PAIRCLF_DATA_MASK_HPP
