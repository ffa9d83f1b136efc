#pragma once

// Circular convolution / correlation, their FFT forms, the matching analytic
// gradients, and the norm-clipping normalization layer.
//
// Index conventions (zero-indexed, all indices mod d):
//   conv(h, s)[k] = sum_i h[i] * s[k - i]
//   corr(h, s)[k] = sum_i h[i] * s[k + i]
// In the frequency domain conv is F^-1(F(h) . F(s)) and corr is
// F^-1(conj(F(h)) . F(s)).

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <ranges>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "aflstm/autograd.hpp"
#include "aflstm/errors.hpp"

namespace aflstm {

enum class FusionOperator { conv, corr, mul };

inline std::string_view to_string(FusionOperator op) {
  switch (op) {
    case FusionOperator::conv: return "conv";
    case FusionOperator::corr: return "corr";
    case FusionOperator::mul: return "mul";
  }
  return "?";
}

inline std::optional<FusionOperator> parse_fusion(std::string_view s) {
  if (s == "conv") return FusionOperator::conv;
  if (s == "corr") return FusionOperator::corr;
  if (s == "mul") return FusionOperator::mul;
  return std::nullopt;
}

using RealVector = std::vector<double>;
template <class T>
using BasicComplexVector = std::vector<std::complex<T>>;
using ComplexVector = BasicComplexVector<double>;

namespace holo {

template <class R>
using scalar_of = std::remove_cvref_t<std::ranges::range_value_t<R>>;

// Contiguous storage of a real scalar: built-in floating point or a class type that behaves like one.
template <class R>
concept RealRange = std::ranges::contiguous_range<R> && !std::is_integral_v<scalar_of<R>> &&
                    std::is_constructible_v<scalar_of<R>, double> && requires(scalar_of<R> x) { x * x + x; };

namespace detail {

template <RealRange R>
std::span<const scalar_of<R>> view(const R& r) {
  return {std::ranges::data(r), std::ranges::size(r)};
}

inline void require_equal(std::size_t a, std::size_t b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": length mismatch " + std::to_string(a) + " vs " + std::to_string(b));
  if (a == 0) throw DimensionError(std::string(op) + ": empty operand");
}

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

template <class T>
T pi() {
  if constexpr (std::is_floating_point_v<T>) {
    return std::numbers::pi_v<T>;
  } else {
    using std::atan;
    return T(4) * atan(T(1));
  }
}

template <class T>
std::complex<T> unit_phasor(T angle) {
  using std::cos;
  using std::sin;
  return {cos(angle), sin(angle)};
}

// In-place iterative radix-2 Cooley-Tukey. sign = -1 forward, +1 inverse (unscaled).
template <class T>
void fft_radix2(BasicComplexVector<T>& a, int sign) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const T ang = T(sign) * T(2) * pi<T>() / static_cast<T>(len);
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles from the exact angle rather than a running product keep round-off flat in n.
      const std::complex<T> w = unit_phasor(ang * static_cast<T>(k));
      for (std::size_t i = 0; i < n; i += len) {
        const std::complex<T> u = a[i + k];
        const std::complex<T> v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

template <class T>
BasicComplexVector<T> dft_direct(const BasicComplexVector<T>& x, int sign) {
  const std::size_t n = x.size();
  BasicComplexVector<T> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<T> acc{};
    for (std::size_t j = 0; j < n; ++j) {
      // (j*k) mod n keeps the angle argument small for large n.
      const T ang = T(sign) * T(2) * pi<T>() * static_cast<T>((j * k) % n) / static_cast<T>(n);
      acc += x[j] * unit_phasor(ang);
    }
    out[k] = acc;
  }
  return out;
}

template <class T>
BasicComplexVector<T> transform(BasicComplexVector<T> x, int sign) {
  if (is_pow2(x.size())) {
    fft_radix2(x, sign);
    return x;
  }
  return dft_direct(x, sign);
}

template <class T>
std::vector<T> conv_naive(std::span<const T> h, std::span<const T> s) {
  const std::size_t d = h.size();
  std::vector<T> out(d);
  for (std::size_t k = 0; k < d; ++k) {
    T acc = 0;
    for (std::size_t i = 0; i < d; ++i) acc += h[i] * s[(k + d - i) % d];
    out[k] = acc;
  }
  return out;
}

template <class T>
std::vector<T> corr_naive(std::span<const T> h, std::span<const T> s) {
  const std::size_t d = h.size();
  std::vector<T> out(d);
  for (std::size_t k = 0; k < d; ++k) {
    T acc = 0;
    for (std::size_t i = 0; i < d; ++i) acc += h[i] * s[(k + i) % d];
    out[k] = acc;
  }
  return out;
}

}  // namespace detail

// Unnormalized forward DFT. Radix-2 FFT for power-of-two lengths, direct O(d^2) sum otherwise.
template <RealRange R>
BasicComplexVector<scalar_of<R>> dft(const R& x) {
  using T = scalar_of<R>;
  if (std::ranges::size(x) == 0) throw DimensionError("dft: empty input");
  BasicComplexVector<T> c(std::ranges::begin(x), std::ranges::end(x));
  return detail::transform(std::move(c), -1);
}

// Inverse DFT with 1/d scaling, keeping the complex result.
template <class T>
BasicComplexVector<T> idft_complex(const BasicComplexVector<T>& X) {
  if (X.empty()) throw DimensionError("idft: empty input");
  BasicComplexVector<T> c = detail::transform(X, +1);
  const T inv = T(1) / static_cast<T>(X.size());
  for (auto& v : c) v *= inv;
  return c;
}

// Inverse DFT with 1/d scaling; returns the real part.
template <class T>
std::vector<T> idft(const BasicComplexVector<T>& X) {
  const BasicComplexVector<T> c = idft_complex(X);
  std::vector<T> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return out;
}

template <RealRange A, RealRange B>
std::vector<scalar_of<A>> circ_conv_naive(const A& h, const B& s) {
  detail::require_equal(std::ranges::size(h), std::ranges::size(s), "circ_conv");
  return detail::conv_naive(detail::view(h), detail::view(s));
}

template <RealRange A, RealRange B>
std::vector<scalar_of<A>> circ_corr_naive(const A& h, const B& s) {
  detail::require_equal(std::ranges::size(h), std::ranges::size(s), "circ_corr");
  return detail::corr_naive(detail::view(h), detail::view(s));
}

template <RealRange A, RealRange B>
std::vector<scalar_of<A>> circ_conv_fft(const A& h, const B& s) {
  detail::require_equal(std::ranges::size(h), std::ranges::size(s), "circ_conv");
  auto fh = dft(h);
  const auto fs = dft(s);
  for (std::size_t i = 0; i < fh.size(); ++i) fh[i] *= fs[i];
  return idft(fh);
}

template <RealRange A, RealRange B>
std::vector<scalar_of<A>> circ_corr_fft(const A& h, const B& s) {
  detail::require_equal(std::ranges::size(h), std::ranges::size(s), "circ_corr");
  auto fh = dft(h);
  const auto fs = dft(s);
  for (std::size_t i = 0; i < fh.size(); ++i) fh[i] = std::conj(fh[i]) * fs[i];
  return idft(fh);
}

// Below this length the O(d^2) loop beats two forward transforms and one inverse.
inline constexpr std::size_t kFftThreshold = 32;

inline bool use_fft(std::size_t d) { return detail::is_pow2(d) && d >= kFftThreshold; }

template <RealRange A, RealRange B>
std::vector<scalar_of<A>> circ_conv(const A& h, const B& s) {
  return use_fft(std::ranges::size(h)) ? circ_conv_fft(h, s) : circ_conv_naive(h, s);
}

template <RealRange A, RealRange B>
std::vector<scalar_of<A>> circ_corr(const A& h, const B& s) {
  return use_fft(std::ranges::size(h)) ? circ_corr_fft(h, s) : circ_corr_naive(h, s);
}

template <RealRange A, RealRange B>
std::vector<scalar_of<A>> hadamard(const A& h, const B& s) {
  detail::require_equal(std::ranges::size(h), std::ranges::size(s), "hadamard");
  const auto hv = detail::view(h);
  const auto sv = detail::view(s);
  std::vector<scalar_of<A>> out(hv.size());
  for (std::size_t i = 0; i < hv.size(); ++i) out[i] = hv[i] * sv[i];
  return out;
}

template <RealRange A, RealRange B>
std::vector<scalar_of<A>> fuse(FusionOperator op, const A& h, const B& s) {
  switch (op) {
    case FusionOperator::conv: return circ_conv(h, s);
    case FusionOperator::corr: return circ_corr(h, s);
    case FusionOperator::mul: return hadamard(h, s);
  }
  throw ContractError("fuse: unknown operator");
}

template <class T>
struct FuseGrads {
  std::vector<T> grad_h;
  std::vector<T> grad_s;
};

// Vector-Jacobian product of fuse(op, h, s) for upstream gradient g.
//   conv: grad_h = corr(s, g), grad_s = corr(h, g)
//   corr: grad_h = corr(g, s), grad_s = conv(h, g)
//   mul:  grad_h = s . g,      grad_s = h . g
template <RealRange G, RealRange A, RealRange B>
FuseGrads<scalar_of<G>> fuse_backward(FusionOperator op, const G& grad_out, const A& h, const B& s) {
  detail::require_equal(std::ranges::size(h), std::ranges::size(s), "fuse_backward");
  detail::require_equal(std::ranges::size(h), std::ranges::size(grad_out), "fuse_backward");
  switch (op) {
    case FusionOperator::conv: return {circ_corr(s, grad_out), circ_corr(h, grad_out)};
    case FusionOperator::corr: return {circ_corr(grad_out, s), circ_conv(h, grad_out)};
    case FusionOperator::mul: return {hadamard(s, grad_out), hadamard(h, grad_out)};
  }
  throw ContractError("fuse_backward: unknown operator");
}

// Projects onto the unit L2 ball: rescale only when the norm exceeds 1.
template <RealRange R>
std::vector<scalar_of<R>> norm_clip(const R& v) {
  using T = scalar_of<R>;
  T sq = 0;
  for (T x : v) sq += x * x;
  using std::sqrt;
  const T n = sqrt(sq);
  std::vector<T> out(std::ranges::begin(v), std::ranges::end(v));
  if (n > T(1)) {
    for (T& x : out) x /= n;
  }
  return out;
}

// Cyclic involution x*[k] = x[-k mod d]; equals corr(x, delta).
template <RealRange R>
std::vector<scalar_of<R>> involution(const R& x) {
  const auto xv = detail::view(x);
  const std::size_t d = xv.size();
  std::vector<scalar_of<R>> out(d);
  for (std::size_t k = 0; k < d; ++k) out[k] = xv[(d - k) % d];
  return out;
}

// Identity of circular convolution: [1, 0, ..., 0].
inline RealVector delta(std::size_t d) {
  RealVector out(d, 0.0);
  out.at(0) = 1.0;
  return out;
}

}  // namespace holo

// Differentiable fusion of two equal-length vectors.
template <class T>
BasicVar<T> fuse(FusionOperator op, BasicVar<T> h, BasicVar<T> s) {
  aflstm::detail::require_same_tape(h, s);
  const BasicTensor<T>& hv = h.value();
  const BasicTensor<T>& sv = s.value();
  if (hv.rank() != 1 || sv.rank() != 1) {
    throw DimensionError("fuse: operands must be vectors, got " + shape_str(hv.shape()) + " and " + shape_str(sv.shape()));
  }
  auto out = BasicTensor<T>::vector(holo::fuse(op, hv.values(), sv.values()));
  const std::size_t ih = h.id(), is = s.id();
  return h.tape().push(std::move(out), [op, ih, is](BasicTape<T>& t, const BasicTensor<T>& g) {
    auto grads = holo::fuse_backward(op, g.values(), t.value(ih).values(), t.value(is).values());
    t.accumulate(ih, BasicTensor<T>::vector(std::move(grads.grad_h)));
    t.accumulate(is, BasicTensor<T>::vector(std::move(grads.grad_s)));
  });
}

// Differentiable projection onto the unit ball. Jacobian when clipped: (I - y y^T) / ||v||.
template <class T>
BasicVar<T> norm_clip(BasicVar<T> v) {
  const BasicTensor<T>& x = v.value();
  T sq = 0;
  for (T e : x.values()) sq += e * e;
  using std::sqrt;
  const T n = sqrt(sq);
  const std::size_t iv = v.id();
  if (n <= T(1)) {
    return v.tape().push(x, [iv](BasicTape<T>& t, const BasicTensor<T>& g) { t.accumulate(iv, g); });
  }
  BasicTensor<T> y = x;
  for (T& e : y.values()) e /= n;
  const std::size_t self = v.tape().size();
  return v.tape().push(std::move(y), [iv, self, n](BasicTape<T>& t, const BasicTensor<T>& g) {
    const BasicTensor<T>& yv = t.value(self);
    T dot = 0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * yv[i];
    BasicTensor<T>& gv = t.grad_buffer(iv);
    for (std::size_t i = 0; i < g.size(); ++i) gv[i] += (g[i] - dot * yv[i]) / n;
  });
}

}  // namespace aflstm
