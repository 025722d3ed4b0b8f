#include "strata/field.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace strata {

void Field::ensure_phys() const {
  if (phys_ok_) return;
  if (!spec_ok_) throw std::logic_error("field: no current representation");
  alloc_phys();
  for (int c = 0; c < rank_; ++c)
    fft_backward(*g_, spec_[c].data(), phys_[c].data());
  phys_ok_ = true;
}

void Field::ensure_spec() const {
  if (spec_ok_) return;
  if (!phys_ok_) throw std::logic_error("field: no current representation");
  alloc_spec();
  for (int c = 0; c < rank_; ++c)
    fft_forward(*g_, phys_[c].data(), spec_[c].data());
  spec_ok_ = true;
}

Field Field::from_function(
    GridPtr g, int rank,
    const std::function<double(int, const std::array<double, 3>&)>& fn) {
  Field f(g, rank);
  const Grid& gr = *g;
  for (int c = 0; c < rank; ++c) {
    double* p = f.phys_raw(c);
    std::array<double, 3> x{0, 0, 0};
    if (gr.dims == 2) {
      const double h0 = gr.len(0) / gr.npts(0), h1 = gr.len(1) / gr.npts(1);
      std::size_t idx = 0;
      for (int i0 = 0; i0 < gr.npts(0); ++i0) {
        x[0] = h0 * i0;
        for (int i1 = 0; i1 < gr.npts(1); ++i1, ++idx) {
          x[1] = h1 * i1;
          p[idx] = fn(c, x);
        }
      }
    } else {
      // memory axes are (x3, x1, x2)
      const double hv = gr.len(0) / gr.npts(0);
      const double h1 = gr.len(1) / gr.npts(1), h2 = gr.len(2) / gr.npts(2);
      std::size_t idx = 0;
      for (int i0 = 0; i0 < gr.npts(0); ++i0) {
        x[2] = hv * i0;
        for (int i1 = 0; i1 < gr.npts(1); ++i1) {
          x[0] = h1 * i1;
          for (int i2 = 0; i2 < gr.npts(2); ++i2, ++idx) {
            x[1] = h2 * i2;
            p[idx] = fn(c, x);
          }
        }
      }
    }
  }
  return f;
}

double Field::lp_norm(double p) const {
  ensure_phys();
  const std::size_t n = g_->npoints();
  if (std::isinf(p)) {
    double mx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double m2 = 0;
      for (int c = 0; c < rank_; ++c) m2 += phys_[c][i] * phys_[c][i];
      mx = std::max(mx, m2);
    }
    return std::sqrt(mx);
  }
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double m2 = 0;
    for (int c = 0; c < rank_; ++c) m2 += phys_[c][i] * phys_[c][i];
    acc += std::pow(m2, 0.5 * p);
  }
  return std::pow(acc * g_->volume() / static_cast<double>(n), 1.0 / p);
}

double Field::l2_norm() const {
  if (!spec_ok_ && phys_ok_) {
    // direct quadrature avoids a transform
    const std::size_t n = g_->npoints();
    double acc = 0;
    for (int c = 0; c < rank_; ++c)
      for (std::size_t i = 0; i < n; ++i) acc += phys_[c][i] * phys_[c][i];
    return std::sqrt(acc * g_->volume() / static_cast<double>(n));
  }
  ensure_spec();
  const int nlast = g_->npts(g_->dims - 1) / 2 + 1;
  double acc = 0;
  for (int c = 0; c < rank_; ++c) {
    const std::complex<double>* s = spec_[c].data();
    const std::size_t ns = g_->nspec();
    for (std::size_t i = 0; i < ns; ++i)
      acc += r2c_weight(*g_, i % nlast) * std::norm(s[i]);
  }
  return std::sqrt(acc * g_->volume());
}

Field Field::component(int c) const {
  Field out(g_, 1);
  if (spec_ok_) {
    std::memcpy(out.spec_raw(0), spec_[c].data(),
                g_->nspec() * sizeof(std::complex<double>));
    if (phys_ok_) {
      out.alloc_phys();
      std::memcpy(out.phys_[0].data(), phys_[c].data(),
                  g_->npoints() * sizeof(double));
      out.phys_ok_ = true;
    }
  } else {
    std::memcpy(out.phys_raw(0), phys_[c].data(), g_->npoints() * sizeof(double));
  }
  return out;
}

double GaussianRng::uniform01() {
  // 53-bit mantissa in (0,1]
  return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1p-53;
}

double GaussianRng::operator()() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  const double u1 = uniform01(), u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(th);
  have_spare_ = true;
  return r * std::cos(th);
}

namespace {

// enforce Hermitian symmetry on the self-conjugate planes of the halved axis
void hermitize(const Grid& g, std::complex<double>* s) {
  const int d = g.dims;
  const int n0 = g.npts(0);
  const int n1 = d == 3 ? g.npts(1) : 1;
  const int nlast = g.npts(d - 1);
  const int nl2 = nlast / 2 + 1;
  auto at = [&](int i0, int i1, int il) -> std::complex<double>& {
    std::size_t idx = d == 2 ? static_cast<std::size_t>(i0) * nl2 + il
                             : (static_cast<std::size_t>(i0) * n1 + i1) * nl2 + il;
    return s[idx];
  };
  for (int il : {0, nlast / 2}) {
    for (int i0 = 0; i0 < n0; ++i0)
      for (int i1 = 0; i1 < n1; ++i1) {
        const int j0 = (n0 - i0) % n0, j1 = (n1 - i1) % n1;
        if (std::make_pair(i0, i1) < std::make_pair(j0, j1)) {
          at(j0, j1, il) = std::conj(at(i0, i1, il));
        } else if (i0 == j0 && i1 == j1) {
          at(i0, i1, il) = at(i0, i1, il).real();
        }
      }
  }
}

}  // namespace

Field random_field(GridPtr g, int rank, std::uint64_t seed, double k0) {
  Field f(g, rank);
  GaussianRng rng(seed);
  const Grid& gr = *g;
  for (int c = 0; c < rank; ++c) {
    std::complex<double>* s = f.spec_raw(c);
    for_each_mode(gr, [&](std::size_t idx, const std::array<int, 3>& m) {
      // draw unconditionally so retained coefficients are seed-stable
      const double re = rng(), im = rng();
      double k2 = 0;
      bool keep = true;
      for (int ax = 0; ax < gr.dims; ++ax) {
        if (std::abs(m[ax]) > gr.keep_max(ax)) keep = false;
        const double k = gr.k_unit(ax) * m[ax];
        k2 += k * k;
      }
      if (!keep || k2 == 0) {
        s[idx] = 0;
        return;
      }
      const double env = std::exp(-k2 / (k0 * k0));
      s[idx] = std::complex<double>(re, im) * env;
    });
    hermitize(gr, s);
  }
  return f;
}

}  // namespace strata
