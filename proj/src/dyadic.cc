#include "strata/dyadic.h"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace strata {
namespace {

constexpr int kNodesPerOctave = 1024;
// table spans lambda in [-1, 2]; support of phi is (log2(3/4), log2(8/3))
constexpr int kLo = -kNodesPerOctave - 2;
constexpr int kHi = 2 * kNodesPerOctave + 2;

double theta(double x) { return x > 0 ? std::exp(-1.0 / x) : 0.0; }
// smooth step: 0 at 0, 1 at 1
double sstep(double x) {
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  const double a = theta(x);
  return a / (a + theta(1 - x));
}

// unnormalized bump: rises on [3/4, 1], flat 1 on [1, 2], falls on [2, 8/3]
double phi_raw(double tau) {
  if (tau <= 0.75 || tau >= 8.0 / 3.0) return 0;
  if (tau < 1) return sstep((tau - 0.75) / 0.25);
  if (tau <= 2) return 1;
  return sstep((8.0 / 3.0 - tau) / (2.0 / 3.0));
}

struct PhiTable {
  std::vector<double> v;  // index i - kLo holds phi at lambda = i / P
  PhiTable() {
    v.resize(kHi - kLo + 1);
    for (int i = kLo; i <= kHi; ++i) {
      const double lam = static_cast<double>(i) / kNodesPerOctave;
      const double tau = std::exp2(lam);
      // adjacent octaves only: supports overlap at most one shell away
      const double denom =
          phi_raw(tau / 2) + phi_raw(tau) + phi_raw(2 * tau);
      v[i - kLo] = denom > 0 ? phi_raw(tau) / denom : 0.0;
    }
  }
  double at(int i) const {
    if (i < kLo || i > kHi) return 0;
    return v[i - kLo];
  }
};

const PhiTable& table() {
  static PhiTable t;
  return t;
}

// Catmull-Rom on the uniform lambda grid; linear in the node data and exact
// on constants, which is what makes the shifted-sum partition exact
double interp(double lam) {
  const double s = lam * kNodesPerOctave;
  const double fl = std::floor(s);
  const int i = static_cast<int>(fl);
  const double u = s - fl;
  const PhiTable& t = table();
  const double f0 = t.at(i - 1), f1 = t.at(i), f2 = t.at(i + 1), f3 = t.at(i + 2);
  const double a = 2 * f1;
  const double b = f2 - f0;
  const double c = 2 * f0 - 5 * f1 + 4 * f2 - f3;
  const double d = -f0 + 3 * f1 - 3 * f2 + f3;
  return 0.5 * (a + u * (b + u * (c + u * d)));
}

}  // namespace

double lp_phi(double tau) {
  if (tau <= 0.75 || tau >= 8.0 / 3.0) return 0;
  return interp(std::log2(tau));
}

double lp_chi(double tau) {
  if (tau < 0) throw std::invalid_argument("lp_chi: tau must be nonnegative");
  if (tau <= 0.75) return 1;
  double s = 0;
  double t = tau;
  while (t > 0.75) {
    s += lp_phi(t);
    t *= 0.5;
  }
  return 1.0 - s;
}

double mode_radius(const Grid& g, Axes axes, const std::array<int, 3>& m) {
  // memory axes: 2D -> (x1, x2); 3D -> (x3, x1, x2)
  double k2 = 0;
  auto add = [&](int mem_axis) {
    const double k = g.k_unit(mem_axis) * m[mem_axis];
    k2 += k * k;
  };
  if (g.dims == 2) {
    if (axes == Axes::Vertical)
      throw std::invalid_argument("dyadic: no vertical axis on a 2D grid");
    add(0);
    add(1);
  } else {
    switch (axes) {
      case Axes::Iso:
        add(0);
        add(1);
        add(2);
        break;
      case Axes::Horizontal:
        add(1);
        add(2);
        break;
      case Axes::Vertical:
        add(0);
        break;
    }
  }
  return std::sqrt(k2);
}

ShellRange shell_range(const Grid& g, Axes axes) {
  // smallest nonzero |k| over the selected axes and largest retained radius
  double kmin = 0, kmax2 = 0;
  auto axis_span = [&](int mem_axis) {
    const double ku = g.k_unit(mem_axis);
    kmin = kmin == 0 ? ku : std::min(kmin, ku);
    const double kx = ku * g.keep_max(mem_axis);
    kmax2 += kx * kx;
  };
  if (g.dims == 2) {
    if (axes == Axes::Vertical)
      throw std::invalid_argument("dyadic: no vertical axis on a 2D grid");
    axis_span(0);
    axis_span(1);
  } else {
    switch (axes) {
      case Axes::Iso:
        axis_span(0);
        axis_span(1);
        axis_span(2);
        break;
      case Axes::Horizontal:
        axis_span(1);
        axis_span(2);
        break;
      case Axes::Vertical:
        axis_span(0);
        break;
    }
  }
  const double kmax = std::sqrt(kmax2);
  // phi(2^-j k) != 0 iff 2^j in (3k/8, 4k/3)
  ShellRange r;
  r.j_min = static_cast<int>(std::ceil(std::log2(kmin * 3.0 / 8.0) + 1e-12));
  r.j_max = static_cast<int>(std::floor(std::log2(kmax * 4.0 / 3.0) - 1e-12));
  if (r.count() < kMinShells)
    throw std::invalid_argument(
        "dyadic: grid too coarse to hold at least 3 dyadic shells");
  return r;
}

namespace {

Field masked(const Field& f, Axes axes, double scale, bool use_chi) {
  const Grid& g = f.grid();
  Field out(f.grid_ptr(), f.rank());
  for (int c = 0; c < f.rank(); ++c) {
    const std::complex<double>* s = f.spec(c);
    std::complex<double>* o = out.spec_raw(c);
    for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
      const double r = mode_radius(g, axes, m) * scale;
      const double w = use_chi ? lp_chi(r) : lp_phi(r);
      o[idx] = w == 0 ? 0.0 : s[idx] * w;
    });
  }
  return out;
}

}  // namespace

Field dyadic_block(const Field& f, Axes axes, int j) {
  return masked(f, axes, std::exp2(static_cast<double>(-j)), false);
}

Field lowpass_block(const Field& f, Axes axes, int j) {
  return masked(f, axes, std::exp2(static_cast<double>(-j)), true);
}

}  // namespace strata
