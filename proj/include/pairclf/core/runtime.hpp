#ifndef PAIRCLF_CORE_RUNTIME_HPP
#define PAIRCLF_CORE_RUNTIME_HPP

#if defined(__x86_64__) || defined(__i386__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#define PAIRCLF_HAS_SSE_CSR 1
#endif

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace pairclf {

/// Flushes float denormals to zero for the lifetime of the guard on the
/// calling thread. Tiny gradients otherwise slow float arithmetic down by
/// an order of magnitude. No-op off x86.
class FlushDenormals {
public:
    FlushDenormals() {
#ifdef PAIRCLF_HAS_SSE_CSR
        saved_ = _mm_getcsr();
        _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
        _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
    }
    ~FlushDenormals() {
#ifdef PAIRCLF_HAS_SSE_CSR
        _mm_setcsr(saved_);
#endif
    }
    FlushDenormals(const FlushDenormals&) = delete;
    FlushDenormals& operator=(const FlushDenormals&) = delete;

private:
    unsigned saved_ = 0;
};

/// Keeps large buffers on the heap instead of fresh mmaps, which avoids
/// repeated page faults for per-batch temporaries. Call once from main().
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 256 << 20);
#endif
}

} // namespace pairclf

#endif // PAIRCLF_CORE_RUNTIME_HPP
