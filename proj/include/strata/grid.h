#pragma once
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <stdexcept>

namespace strata {

// Periodic Fourier grid. Memory order is row-major with the vertical axis
// outermost in 3D: (x3, x1, x2). The last axis is halved by the r2c transform.
// Wavenumbers are integer multiples of 2*pi/box_length per axis.
struct Grid {
  int dims = 2;
  int n_h = 0;  // points per horizontal axis
  int n_v = 0;  // vertical points, 3D only
  std::array<double, 3> box{0, 0, 0};  // x1, x2, x3 lengths
  double dealias_fraction = 2.0 / 3.0;

  int naxes() const { return dims; }
  // points along memory axis m (m = 0 outermost)
  int npts(int m) const {
    if (dims == 2) return n_h;
    return m == 0 ? n_v : n_h;
  }
  // physical box length along memory axis m
  double len(int m) const {
    if (dims == 2) return box[m];
    return m == 0 ? box[2] : box[m - 1];
  }
  double k_unit(int m) const { return 2.0 * std::numbers::pi / len(m); }

  std::size_t npoints() const {
    std::size_t n = 1;
    for (int m = 0; m < dims; ++m) n *= static_cast<std::size_t>(npts(m));
    return n;
  }
  // complex coefficients in r2c layout (last axis halved)
  std::size_t nspec() const {
    std::size_t n = 1;
    for (int m = 0; m < dims - 1; ++m) n *= static_cast<std::size_t>(npts(m));
    return n * (static_cast<std::size_t>(npts(dims - 1)) / 2 + 1);
  }
  double volume() const {
    double v = 1;
    for (int m = 0; m < dims; ++m) v *= len(m);
    return v;
  }
  double min_spacing() const {
    double h = len(0) / npts(0);
    for (int m = 1; m < dims; ++m) h = std::min(h, len(m) / npts(m));
    return h;
  }
  // signed integer frequency for index i on an axis with n points
  static int ifreq(int i, int n) { return i <= n / 2 ? i : i - n; }
  // retained integer-frequency cutoff per axis (2/3 rule by default)
  int keep_max(int m) const {
    return static_cast<int>(std::floor(dealias_fraction * (npts(m) / 2) + 1e-9));
  }
  bool same_layout(const Grid& o) const {
    return dims == o.dims && n_h == o.n_h && n_v == o.n_v;
  }
  bool operator==(const Grid& o) const {
    return same_layout(o) && box == o.box && dealias_fraction == o.dealias_fraction;
  }
};

using GridPtr = std::shared_ptr<const Grid>;

inline GridPtr make_grid2d(int n, double box_len, double dealias = 2.0 / 3.0) {
  if (n < 8 || (n & (n - 1)) != 0) throw std::invalid_argument("grid: n must be a power of two >= 8");
  if (box_len <= 0) throw std::invalid_argument("grid: box length must be positive");
  Grid g;
  g.dims = 2;
  g.n_h = n;
  g.box = {box_len, box_len, 0};
  g.dealias_fraction = dealias;
  return std::make_shared<const Grid>(g);
}

inline GridPtr make_grid3d(int n_h, int n_v, double box_h, double box_v,
                           double dealias = 2.0 / 3.0) {
  if (n_h < 8 || (n_h & (n_h - 1)) != 0) throw std::invalid_argument("grid: n_h must be a power of two >= 8");
  if (n_v < 4 || (n_v & (n_v - 1)) != 0) throw std::invalid_argument("grid: n_v must be a power of two >= 4");
  if (box_h <= 0 || box_v <= 0) throw std::invalid_argument("grid: box lengths must be positive");
  Grid g;
  g.dims = 3;
  g.n_h = n_h;
  g.n_v = n_v;
  g.box = {box_h, box_h, box_v};
  g.dealias_fraction = dealias;
  return std::make_shared<const Grid>(g);
}

}  // namespace strata
