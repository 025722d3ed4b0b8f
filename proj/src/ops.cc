#include "strata/ops.h"

#include <cmath>
#include <stdexcept>

#include "strata/dyadic.h"

namespace strata {

int mem_axis(const Grid& g, int phys_axis) {
  if (g.dims == 2) {
    if (phys_axis > 1) throw std::invalid_argument("ops: no x3 on a 2D grid");
    return phys_axis;
  }
  return phys_axis == 2 ? 0 : phys_axis + 1;
}

// k vector (physical-axis order) for a mode
void mode_k(const Grid& g, const std::array<int, 3>& m, double* k) {
  if (g.dims == 2) {
    k[0] = g.k_unit(0) * m[0];
    k[1] = g.k_unit(1) * m[1];
    k[2] = 0;
  } else {
    k[0] = g.k_unit(1) * m[1];
    k[1] = g.k_unit(2) * m[2];
    k[2] = g.k_unit(0) * m[0];
  }
}

double spectral_sobolev_norm(const Field& f, int order) {
  const Grid& g = f.grid();
  const int nlast = g.npts(g.dims - 1) / 2 + 1;
  double acc = 0;
  for (int c = 0; c < f.rank(); ++c) {
    const std::complex<double>* s = f.spec(c);
    for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
      double k[3];
      mode_k(g, m, k);
      const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
      acc += r2c_weight(g, idx % nlast) * std::pow(k2, order) *
             std::norm(s[idx]);
    });
  }
  return std::sqrt(acc * g.volume());
}

namespace {

inline bool retained(const Grid& g, const std::array<int, 3>& m) {
  for (int ax = 0; ax < g.dims; ++ax)
    if (std::abs(m[ax]) > g.keep_max(ax)) return false;
  return true;
}

}  // namespace

Field deriv(const Field& f, int phys_axis) {
  const Grid& g = f.grid();
  const int ma = mem_axis(g, phys_axis);
  const double ku = g.k_unit(ma);
  const int n = g.npts(ma);
  Field out(f.grid_ptr(), f.rank());
  for (int c = 0; c < f.rank(); ++c) {
    const std::complex<double>* s = f.spec(c);
    std::complex<double>* o = out.spec_raw(c);
    for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
      // the shared +-n/2 slot of an even grid cannot carry a real field's
      // odd derivative; zero it so spectra stay realizable
      o[idx] = 2 * std::abs(m[ma]) == n
                   ? std::complex<double>(0, 0)
                   : std::complex<double>(0, ku * m[ma]) * s[idx];
    });
  }
  return out;
}

Field laplacian(const Field& f) { return laplacian_aniso(f, 1.0); }

Field laplacian_aniso(const Field& f, double eps2) {
  const Grid& g = f.grid();
  Field out(f.grid_ptr(), f.rank());
  for (int c = 0; c < f.rank(); ++c) {
    const std::complex<double>* s = f.spec(c);
    std::complex<double>* o = out.spec_raw(c);
    for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
      double k[3];
      mode_k(g, m, k);
      const double k2 = k[0] * k[0] + k[1] * k[1] + eps2 * k[2] * k[2];
      o[idx] = -k2 * s[idx];
    });
  }
  return out;
}

namespace {

// which physical components of ik sit on a shared +-n/2 slot (layout of
// mode_k); odd-derivative operators must zero those to stay realizable
inline void mode_k_nyquist(const Grid& g, const std::array<int, 3>& m,
                           bool* nyq) {
  const auto at = [&](int ma) { return 2 * std::abs(m[ma]) == g.npts(ma); };
  if (g.dims == 2) {
    nyq[0] = at(0);
    nyq[1] = at(1);
    nyq[2] = false;
  } else {
    nyq[0] = at(1);
    nyq[1] = at(2);
    nyq[2] = at(0);
  }
}

}  // namespace

Field grad(const Field& scalar, bool horizontal_only) {
  if (scalar.rank() != 1) throw std::invalid_argument("grad: scalar input required");
  const Grid& g = scalar.grid();
  const int nc = horizontal_only ? 2 : g.dims;
  Field out(scalar.grid_ptr(), nc);
  const std::complex<double>* s = scalar.spec(0);
  std::vector<std::complex<double>*> o(nc);
  for (int c = 0; c < nc; ++c) o[c] = out.spec_raw(c);
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    bool nyq[3];
    mode_k(g, m, k);
    mode_k_nyquist(g, m, nyq);
    for (int c = 0; c < nc; ++c)
      o[c][idx] = nyq[c] ? std::complex<double>(0, 0)
                         : std::complex<double>(0, k[c]) * s[idx];
  });
  return out;
}

Field div(const Field& vec) {
  const Grid& g = vec.grid();
  const int nc = vec.rank();
  if (nc < 2) throw std::invalid_argument("div: vector input required");
  Field out(vec.grid_ptr(), 1);
  std::vector<const std::complex<double>*> s(nc);
  for (int c = 0; c < nc; ++c) s[c] = vec.spec(c);
  std::complex<double>* o = out.spec_raw(0);
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    bool nyq[3];
    mode_k(g, m, k);
    mode_k_nyquist(g, m, nyq);
    std::complex<double> acc = 0;
    for (int c = 0; c < nc; ++c)
      if (!nyq[c]) acc += std::complex<double>(0, k[c]) * s[c][idx];
    o[idx] = acc;
  });
  return out;
}

void dealias_inplace(Field& f) {
  const Grid& g = f.grid();
  for (int c = 0; c < f.rank(); ++c) {
    std::complex<double>* s = f.spec_mut(c);
    for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
      if (!retained(g, m)) s[idx] = 0;
    });
  }
}

Field dealiased(const Field& f) {
  Field out = f;
  dealias_inplace(out);
  return out;
}

Field multiply(const Field& a, const Field& b) {
  const Grid& g = a.grid();
  if (!g.same_layout(b.grid())) throw std::invalid_argument("multiply: grid mismatch");
  const std::size_t n = g.npoints();
  int out_rank;
  enum { kScalarVec, kVecScalar, kDot } mode;
  if (a.rank() == 1) {
    out_rank = b.rank();
    mode = kScalarVec;
  } else if (b.rank() == 1) {
    out_rank = a.rank();
    mode = kVecScalar;
  } else if (a.rank() == b.rank()) {
    out_rank = 1;
    mode = kDot;
  } else {
    throw std::invalid_argument("multiply: incompatible ranks");
  }
  Field out(a.grid_ptr(), out_rank);
  if (mode == kDot) {
    double* o = out.phys_raw(0);
    std::fill(o, o + n, 0.0);
    for (int c = 0; c < a.rank(); ++c) {
      const double* pa = a.phys(c);
      const double* pb = b.phys(c);
      for (std::size_t i = 0; i < n; ++i) o[i] += pa[i] * pb[i];
    }
  } else {
    for (int c = 0; c < out_rank; ++c) {
      const double* pa = a.phys(mode == kScalarVec ? 0 : c);
      const double* pb = b.phys(mode == kVecScalar ? 0 : c);
      double* o = out.phys_raw(c);
      for (std::size_t i = 0; i < n; ++i) o[i] = pa[i] * pb[i];
    }
  }
  out.ensure_spec();
  dealias_inplace(out);
  return out;
}

Field lincomb(double alpha, const Field& f, double beta, const Field& g) {
  if (!f.grid().same_layout(g.grid()) || f.rank() != g.rank())
    throw std::invalid_argument("lincomb: shape mismatch");
  Field out(f.grid_ptr(), f.rank());
  const std::size_t ns = f.grid().nspec();
  for (int c = 0; c < f.rank(); ++c) {
    const std::complex<double>* a = f.spec(c);
    const std::complex<double>* b = g.spec(c);
    std::complex<double>* o = out.spec_raw(c);
    for (std::size_t i = 0; i < ns; ++i) o[i] = alpha * a[i] + beta * b[i];
  }
  return out;
}

Field scaled(const Field& f, double alpha) {
  Field out(f.grid_ptr(), f.rank());
  const std::size_t ns = f.grid().nspec();
  for (int c = 0; c < f.rank(); ++c) {
    const std::complex<double>* a = f.spec(c);
    std::complex<double>* o = out.spec_raw(c);
    for (std::size_t i = 0; i < ns; ++i) o[i] = alpha * a[i];
  }
  return out;
}

Field heat_propagate(const Field& f, double t) {
  return heat_propagate_aniso(f, t, 1.0);
}

Field heat_propagate_aniso(const Field& f, double t, double eps2) {
  const Grid& g = f.grid();
  Field out(f.grid_ptr(), f.rank());
  for (int c = 0; c < f.rank(); ++c) {
    const std::complex<double>* s = f.spec(c);
    std::complex<double>* o = out.spec_raw(c);
    for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
      double k[3];
      mode_k(g, m, k);
      const double k2 = k[0] * k[0] + k[1] * k[1] + eps2 * k[2] * k[2];
      o[idx] = s[idx] * std::exp(-t * k2);
    });
  }
  return out;
}

Field gradient_part(const Field& u) {
  const Grid& g = u.grid();
  const int nc = u.rank();
  if (nc != g.dims) throw std::invalid_argument("gradient_part: rank must match dims");
  Field out(u.grid_ptr(), nc);
  std::vector<const std::complex<double>*> s(nc);
  std::vector<std::complex<double>*> o(nc);
  for (int c = 0; c < nc; ++c) {
    s[c] = u.spec(c);
    o[c] = out.spec_raw(c);
  }
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    mode_k(g, m, k);
    const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    if (k2 == 0) {
      for (int c = 0; c < nc; ++c) o[c][idx] = 0;
      return;
    }
    std::complex<double> kdotu = 0;
    for (int c = 0; c < nc; ++c) kdotu += k[c] * s[c][idx];
    for (int c = 0; c < nc; ++c) o[c][idx] = k[c] * kdotu / k2;
  });
  return out;
}

Field leray_project(const Field& u) {
  return lincomb(1.0, u, -1.0, gradient_part(u));
}

Field apply_Ma(const Field& a, const Field& g) {
  return scaled(gradient_part(multiply(a, g)), -1.0);
}

namespace {

Field invlap_div(const Field& f) {
  const Grid& g = f.grid();
  Field out(f.grid_ptr(), 1);
  std::vector<const std::complex<double>*> s(g.dims);
  for (int c = 0; c < g.dims; ++c) s[c] = f.spec(c);
  std::complex<double>* o = out.spec_raw(0);
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    mode_k(g, m, k);
    const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    if (k2 == 0) {
      o[idx] = 0;
      return;
    }
    std::complex<double> divf = 0;
    for (int c = 0; c < g.dims; ++c)
      divf += std::complex<double>(0, k[c]) * s[c][idx];
    o[idx] = -divf / k2;
  });
  return out;
}

}  // namespace

NeumannResult invert_id_minus_Ma(const Field& a, const Field& rhs, double tol,
                                 int max_iter, const Field* guess) {
  const Grid& g = rhs.grid();
  if (rhs.rank() != g.dims)
    throw std::invalid_argument("invert_id_minus_Ma: rank must match dims");
  // write g_n = rhs + grad q_n; then q solves q = -invlap div(a (rhs + grad q))
  NeumannResult res;
  Field a_rhs = multiply(a, rhs);
  Field q0 = scaled(invlap_div(a_rhs), -1.0);  // -invlap div(a rhs)
  double rhs_scale = rhs.l2_norm();
  if (rhs_scale == 0) rhs_scale = 1;

  // q_guess recovers the potential of guess - rhs (exact when guess - rhs is
  // a gradient, which holds for every iterate this solver produces)
  Field q = guess ? invlap_div(lincomb(1.0, *guess, -1.0, rhs)) : q0;
  for (int it = 1; it <= max_iter; ++it) {
    // q_next = q0 - invlap div(a grad q)
    Field agq = multiply(a, grad(q));
    Field next = lincomb(1.0, q0, -1.0, invlap_div(agq));
    const int nlast = g.npts(g.dims - 1) / 2 + 1;
    const std::complex<double>* p0 = q.spec(0);
    const std::complex<double>* p1 = next.spec(0);
    double acc = 0;
    for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
      double k[3];
      mode_k(g, m, k);
      const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
      acc += r2c_weight(g, idx % nlast) * k2 * std::norm(p1[idx] - p0[idx]);
    });
    const double rel = std::sqrt(acc * g.volume()) / rhs_scale;
    res.history.push_back(rel);
    q = std::move(next);
    res.iterations = it;
    res.residual = rel;
    if (rel < tol) {
      res.converged = true;
      break;
    }
  }
  Field gq = grad(q);
  res.g = lincomb(1.0, rhs, 1.0, gq);
  return res;
}

ProjectResult modified_leray_project(const Field& a, const Field& f, double tol,
                                     int max_iter, const Field* guess) {
  Field rhs0 = gradient_part(f);
  NeumannResult nr = invert_id_minus_Ma(a, rhs0, tol, max_iter, guess);
  ProjectResult pr;
  pr.iterations = nr.iterations;
  pr.residual = nr.residual;
  pr.converged = nr.converged;
  pr.grad_pi = std::move(nr.g);
  Field ag = multiply(a, pr.grad_pi);
  // P_a f = f - grad_pi - a grad_pi
  pr.f = lincomb(1.0, lincomb(1.0, f, -1.0, pr.grad_pi), -1.0, ag);
  return pr;
}

Field vertical_rescale(const Field& f, double eps) {
  const Grid& g = f.grid();
  if (g.dims != 3)
    throw std::invalid_argument("vertical_rescale: 3D slab field required");
  if (eps <= 0 || eps > 1)
    throw std::invalid_argument("vertical_rescale: eps must be in (0, 1]");
  const double mreal = -std::log2(eps);
  const int m = static_cast<int>(std::lround(mreal));
  if (std::abs(mreal - m) > 1e-12)
    throw std::invalid_argument("vertical_rescale: eps must be a dyadic 2^-m");
  Grid ng = g;
  ng.box[2] = g.box[2] * std::exp2(static_cast<double>(m));
  auto ngp = std::make_shared<const Grid>(ng);
  Field out(ngp, f.rank());
  // samples on the stretched box coincide with the original samples
  if (f.spec_current()) {
    for (int c = 0; c < f.rank(); ++c)
      std::memcpy(out.spec_raw(c), f.spec(c),
                  g.nspec() * sizeof(std::complex<double>));
  } else {
    for (int c = 0; c < f.rank(); ++c)
      std::memcpy(out.phys_raw(c), f.phys(c), g.npoints() * sizeof(double));
  }
  return out;
}

SplitEnergy sharp_split_energy(const Field& f, double radius) {
  const Grid& g = f.grid();
  const int nlast = g.npts(g.dims - 1) / 2 + 1;
  const double r2 = radius * radius;
  SplitEnergy se;
  for (int c = 0; c < f.rank(); ++c) {
    const std::complex<double>* s = f.spec(c);
    for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
      double k[3];
      mode_k(g, m, k);
      const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
      const double e = r2c_weight(g, idx % nlast) * std::norm(s[idx]);
      if (k2 <= r2)
        se.low += e;
      else
        se.high += e;
    });
  }
  se.low *= g.volume();
  se.high *= g.volume();
  return se;
}

}  // namespace strata
