#pragma once

// Width-2 complex double-precision kernels.
//
// A 256-bit lane group holds two complex doubles interleaved as
// [re0, im0, re1, im1].  The vectorized product uses the shuffle/FMA
// dataflow: duplicate the real and imaginary parts of `a`, swap the
// components of `b`, one plain multiply, one fused multiply-add/sub.
// A portable scalar implementation with the same API is always
// available so every higher layer runs on any hardware.
//
// Accuracy contract: the fused path may differ from the scalar
// reference by at most 2 ulp per component, measured at the magnitude
// of the dominant product term (cancellation can make the result
// itself arbitrarily small; the absolute rounding error cannot exceed
// a couple of ulp of the intermediate products).

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define CSE_KERNELS_AVX2 1
#endif

namespace cse::kernels {

using Complex = std::complex<double>;

/// Two complex doubles in one logical 256-bit lane group, interleaved
/// real/imaginary.  Lane order is stable under load/store round trips.
struct ComplexPair {
    alignas(32) std::array<double, 4> v{};  // [re0, im0, re1, im1]

    static ComplexPair from(Complex a, Complex b) {
        return {{a.real(), a.imag(), b.real(), b.imag()}};
    }
    static ComplexPair broadcast(Complex a) { return from(a, a); }
    static ComplexPair zero() { return {}; }
    static ComplexPair load(const Complex* p) { return from(p[0], p[1]); }

    Complex lane0() const { return {v[0], v[1]}; }
    Complex lane1() const { return {v[2], v[3]}; }
    void store(Complex* p) const {
        p[0] = lane0();
        p[1] = lane1();
    }
};

/// True when the AVX2/FMA code path is compiled in.
constexpr bool vectorized() {
#if defined(CSE_KERNELS_AVX2)
    return true;
#else
    return false;
#endif
}

// ---------------------------------------------------------------------------
// Scalar reference path
// ---------------------------------------------------------------------------

/// Lanewise complex product, plain mul/add evaluation order.
inline ComplexPair cmul2_scalar(const ComplexPair& a, const ComplexPair& b) {
    ComplexPair r;
    r.v[0] = a.v[0] * b.v[0] - a.v[1] * b.v[1];
    r.v[1] = a.v[0] * b.v[1] + a.v[1] * b.v[0];
    r.v[2] = a.v[2] * b.v[2] - a.v[3] * b.v[3];
    r.v[3] = a.v[2] * b.v[3] + a.v[3] * b.v[2];
    return r;
}

/// acc + a*b lanewise, scalar evaluation order.
inline ComplexPair cfma2_scalar(const ComplexPair& a, const ComplexPair& b,
                                const ComplexPair& acc) {
    ComplexPair p = cmul2_scalar(a, b);
    ComplexPair r;
    for (int i = 0; i < 4; ++i) r.v[i] = acc.v[i] + p.v[i];
    return r;
}

// ---------------------------------------------------------------------------
// Vectorized path
// ---------------------------------------------------------------------------

#if defined(CSE_KERNELS_AVX2)

namespace detail {
inline __m256d to_reg(const ComplexPair& p) { return _mm256_load_pd(p.v.data()); }
inline ComplexPair from_reg(__m256d r) {
    ComplexPair p;
    _mm256_store_pd(p.v.data(), r);
    return p;
}

// Two complex products in two multiplies: bSwap = [im,re] pairs of b,
// aIm/aRe duplicate the parts of a, then fmaddsub combines
// aRe*b -/+ aIm*bSwap into [re, im] of the product.
inline __m256d mul_reg(__m256d a, __m256d b) {
    __m256d b_swap = _mm256_shuffle_pd(b, b, 0x5);
    __m256d a_im = _mm256_shuffle_pd(a, a, 0xF);
    __m256d a_re = _mm256_shuffle_pd(a, a, 0x0);
    __m256d a_im_b_swap = _mm256_mul_pd(a_im, b_swap);
    return _mm256_fmaddsub_pd(a_re, b, a_im_b_swap);
}

// acc + a*b with the accumulator folded into the addsub step:
// even lanes need aRe*b - (aIm*bSwap - acc), odd lanes aRe*b + (aIm*bSwap + acc).
inline __m256d fma_reg(__m256d a, __m256d b, __m256d acc) {
    __m256d b_swap = _mm256_shuffle_pd(b, b, 0x5);
    __m256d a_im = _mm256_shuffle_pd(a, a, 0xF);
    __m256d a_re = _mm256_shuffle_pd(a, a, 0x0);
    __m256d t = _mm256_addsub_pd(_mm256_mul_pd(a_im, b_swap), acc);
    return _mm256_fmaddsub_pd(a_re, b, t);
}

inline __m256d conj_reg(__m256d a) {
    const __m256d mask = _mm256_set_pd(-0.0, 0.0, -0.0, 0.0);
    return _mm256_xor_pd(a, mask);
}
}  // namespace detail

inline ComplexPair cmul2(const ComplexPair& a, const ComplexPair& b) {
    return detail::from_reg(detail::mul_reg(detail::to_reg(a), detail::to_reg(b)));
}

inline ComplexPair cfma2(const ComplexPair& a, const ComplexPair& b,
                         const ComplexPair& acc) {
    return detail::from_reg(
        detail::fma_reg(detail::to_reg(a), detail::to_reg(b), detail::to_reg(acc)));
}

#else

inline ComplexPair cmul2(const ComplexPair& a, const ComplexPair& b) {
    return cmul2_scalar(a, b);
}

inline ComplexPair cfma2(const ComplexPair& a, const ComplexPair& b,
                         const ComplexPair& acc) {
    return cfma2_scalar(a, b, acc);
}

#endif  // CSE_KERNELS_AVX2

// ---------------------------------------------------------------------------
// Dot product
// ---------------------------------------------------------------------------

namespace detail {

inline Complex conj_if(Complex z, bool c) { return c ? std::conj(z) : z; }

// Fixed accumulation order: two lanes stride the even/odd positions, an
// odd-length tail lands in lane 0, then a single horizontal reduce
// lane0 + lane1.  Deterministic run to run on the same build.
template <typename Fma>
Complex cdot_impl(std::span<const Complex> a, std::span<const Complex> b,
                  bool conjugate_a, Fma&& fma) {
    if (a.size() != b.size())
        throw std::invalid_argument("cdot: length mismatch");
    ComplexPair acc = ComplexPair::zero();
    std::size_t i = 0;
    for (; i + 2 <= a.size(); i += 2) {
        ComplexPair pa = ComplexPair::from(conj_if(a[i], conjugate_a),
                                           conj_if(a[i + 1], conjugate_a));
        acc = fma(pa, ComplexPair::load(&b[i]), acc);
    }
    if (i < a.size()) {
        ComplexPair pa = ComplexPair::from(conj_if(a[i], conjugate_a), Complex{});
        acc = fma(pa, ComplexPair::from(b[i], Complex{}), acc);
    }
    return acc.lane0() + acc.lane1();
}

}  // namespace detail

/// sum a_i*b_i (or conj(a_i)*b_i).  Result lies within 4*n ulp of a
/// scalar left-to-right accumulation.
inline Complex cdot(std::span<const Complex> a, std::span<const Complex> b,
                    bool conjugate_a = false) {
    return detail::cdot_impl(a, b, conjugate_a,
                             [](auto& x, auto y, auto z) { return cfma2(x, y, z); });
}

/// Scalar-path cdot with the identical lane-structured accumulation order.
inline Complex cdot_scalar(std::span<const Complex> a, std::span<const Complex> b,
                           bool conjugate_a = false) {
    return detail::cdot_impl(a, b, conjugate_a, [](auto& x, auto y, auto z) {
        return cfma2_scalar(x, y, z);
    });
}

}  // namespace cse::kernels
