#pragma once

#include <cmath>
#include <cstdint>

namespace hgs {

/// PCG64 (XSL-RR 128/64). Deterministic across platforms for a given seed;
/// every random draw in the project goes through this generator so that
/// datasets, initializations and experiments replay exactly.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) {
    // splitmix64 expansion of the seed into the 128-bit state.
    uint64_t s = seed;
    uint64_t lo = splitmix(s);
    uint64_t hi = splitmix(s);
    state_ = (static_cast<__uint128_t>(hi) << 64) | lo;
    inc_ = ((static_cast<__uint128_t>(splitmix(s)) << 64) | (stream * 2 + 1)) | 1;
    next_u64();
    next_u64();
  }

  uint64_t next_u64() {
    state_ = state_ * kMult + inc_;
    uint64_t hi = static_cast<uint64_t>(state_ >> 64);
    uint64_t lo = static_cast<uint64_t>(state_);
    uint64_t rot = hi >> 58;
    uint64_t x = hi ^ lo;
    return (x >> rot) | (x << ((64 - rot) & 63));
  }

  /// Uniform in [0,1) with 53 bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo,hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Integer in [0,n).
  uint64_t below(uint64_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    uint64_t x, r;
    do {
      x = next_u64();
      r = x % n;
    } while (x - r > UINT64_MAX - n + 1);
    return r;
  }

  /// Standard normal via the AS241 inverse CDF (one uniform per draw, so the
  /// stream layout is position-independent and documented).
  double normal() { return inverse_normal_cdf(half_open_unit()); }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  static double inverse_normal_cdf(double p);

 private:
  static constexpr __uint128_t kMult =
      (static_cast<__uint128_t>(0x2360ed051fc65da4ull) << 64) | 0x4385df649fccf645ull;

  // (0,1) exclusive of both ends, for the inverse CDF.
  double half_open_unit() {
    double u = next_double();
    return u <= 0.0 ? 0x1.0p-53 : u;
  }

  static uint64_t splitmix(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  __uint128_t state_;
  __uint128_t inc_;
};

/// Wichura's AS241 rational approximations (double precision, |err| ~ 1e-15).
inline double Rng::inverse_normal_cdf(double p) {
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) *
                    r +
                4.5921953931549871457e+4) *
                   r +
               1.3731693765509461125e+4) *
                  r +
              1.9715909503065514427e+3) *
                 r +
             1.3314166789178437745e+2) *
                r +
            3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) *
                    r +
                2.1213794301586595867e+4) *
                   r +
               5.3941960214247511077e+3) *
                  r +
              6.8718700749205790830e+2) *
                 r +
             4.2313330701600911252e+1) *
                r +
            1.0);
  }
  double r = q < 0 ? p : 1 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) *
                   r +
               1.27045825245236838258e+0) *
                  r +
              3.64784832476320460504e+0) *
                 r +
             5.76949722146069140550e+0) *
                r +
            4.63033784615654529590e+0) *
               r +
           1.42343711074968357734e+0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) *
                   r +
               1.48103976427480074590e-1) *
                  r +
              6.89767334985100004550e-1) *
                 r +
             1.67638483018380384940e+0) *
                r +
            2.05319162663775882187e+0) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) *
                   r +
               2.65321895265761230930e-2) *
                  r +
              2.96560571828504891230e-1) *
                 r +
             1.78482653991729133580e+0) *
                r +
            5.46378491116411436990e+0) *
               r +
           6.65790464350110377720e+0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) *
                   r +
               7.86869131145613259100e-4) *
                  r +
              1.48753612908506148525e-2) *
                 r +
             1.36929880922735805310e-1) *
                r +
            5.99832206555887937690e-1) *
               r +
           1.0);
  }
  return q < 0 ? -val : val;
}

}  // namespace hgs
