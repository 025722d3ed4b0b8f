#include "strata/ins2d.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "strata/besov.h"
#include "strata/dyadic.h"

namespace strata {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool has_field(const Field& f) { return f.rank() > 0; }

// snapshot copy holding only the spectral representation
Field spec_copy(const Field& f) {
  Field r(f.grid_ptr(), f.rank());
  for (int c = 0; c < f.rank(); ++c)
    std::memcpy(r.spec_raw(c), f.spec(c),
                f.grid().nspec() * sizeof(std::complex<double>));
  return r;
}

bool spec_is_zero(const Field& f) {
  for (int c = 0; c < f.rank(); ++c) {
    const std::complex<double>* s = f.spec(c);
    for (std::size_t i = 0; i < f.grid().nspec(); ++i)
      if (s[i] != std::complex<double>(0, 0)) return false;
  }
  return true;
}

// rho = 1/(1+a) pointwise
void density_values(const Field& a, std::vector<double>& rho) {
  const double* ap = a.phys(0);
  const std::size_t n = a.grid().npoints();
  rho.resize(n);
  for (std::size_t i = 0; i < n; ++i) rho[i] = 1.0 / (1.0 + ap[i]);
}

double lp_quadrature(const Grid& g, const std::vector<double>& v, double p) {
  if (p == kInf) {
    double m = 0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }
  double acc = 0;
  for (double x : v) acc += std::pow(std::abs(x), p);
  return std::pow(acc * g.volume() / g.npoints(), 1.0 / p);
}

// weighted kinetic quadrature: integral of w |u|^2
double weighted_energy(const std::vector<double>& w, const Field& u) {
  const Grid& g = u.grid();
  const std::size_t n = g.npoints();
  double acc = 0;
  for (int c = 0; c < u.rank(); ++c) {
    const double* up = u.phys(c);
    for (std::size_t i = 0; i < n; ++i) acc += w[i] * up[i] * up[i];
  }
  return acc * g.volume() / g.npoints();
}

}  // namespace

MomentReport measure_initial(const InitialSpec& spec) {
  const Grid& g = spec.sigma0.grid();
  if (g.dims != 2 || spec.v0.rank() != 2 || spec.sigma0.rank() != 1)
    throw std::invalid_argument("initial data must be 2D scalar + vector");
  if (!spec.v0.grid().same_layout(g))
    throw std::invalid_argument("initial fields on mismatched grids");

  MomentReport r;
  const double dv = g.volume() / g.npoints();
  const double* sg = spec.sigma0.phys(0);
  const double* v0 = spec.v0.phys(0);
  const double* v1 = spec.v0.phys(1);
  const int n0 = g.npts(0), n1 = g.npts(1);
  const double h0 = g.len(0) / n0, h1 = g.len(1) / n1;
  const double c0 = g.len(0) / 2, c1 = g.len(1) / 2;

  double abs_pm[2] = {0, 0}, abs_w[4] = {0, 0, 0, 0}, abs_mom[2] = {0, 0};
  r.rho_min = kInf;
  r.rho_max = -kInf;
  for (int i = 0; i < n0; ++i) {
    const double x[2] = {i * h0 - c0, 0};
    for (int j = 0; j < n1; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * n1 + j;
      const double y[2] = {x[0], j * h1 - c1};
      const double s = sg[idx], vv[2] = {v0[idx], v1[idx]};
      const double rho = 1 + spec.eta * s;
      r.rho_min = std::min(r.rho_min, rho);
      r.rho_max = std::max(r.rho_max, rho);
      const double speed = std::hypot(vv[0], vv[1]);
      r.U0 += std::hypot(y[0], y[1]) * speed * dv;
      for (int c = 0; c < 2; ++c) {
        r.momentum[c] += rho * vv[c] * dv;
        abs_mom[c] += rho * std::abs(vv[c]) * dv;
        r.profile_moment[c] += s * vv[c] * dv;
        abs_pm[c] += std::abs(s * vv[c]) * dv;
        for (int jc = 0; jc < 2; ++jc) {
          r.weighted[2 * jc + c] += y[jc] * s * vv[c] * dv;
          abs_w[2 * jc + c] += std::abs(y[jc] * s * vv[c]) * dv;
        }
      }
    }
  }
  // report cancellation-relative moments: |integral| / integral of |..|
  for (int c = 0; c < 2; ++c) {
    r.momentum[c] = abs_mom[c] > 0 ? r.momentum[c] / abs_mom[c] : 0;
    r.profile_moment[c] = abs_pm[c] > 0 ? r.profile_moment[c] / abs_pm[c] : 0;
  }
  for (int c = 0; c < 4; ++c)
    r.weighted[c] = abs_w[c] > 0 ? r.weighted[c] / abs_w[c] : 0;

  const double vnorm = spec.v0.l2_norm();
  r.div_residual = div(spec.v0).l2_norm() / std::max(1.0, vnorm);
  return r;
}

FluidState validate_initial(const InitialSpec& spec) {
  MomentReport m = measure_initial(spec);
  std::ostringstream bad;
  if (m.rho_min < 0.75 - 1e-12 || m.rho_max > 1.25 + 1e-12)
    bad << "density range [" << m.rho_min << ", " << m.rho_max
        << "] leaves [3/4, 5/4]; ";
  if (m.div_residual > 1e-10)
    bad << "div v0 residual " << m.div_residual << " > 1e-10; ";
  const double tol = spec.moment_tolerance;
  for (int c = 0; c < 2; ++c) {
    if (std::abs(m.profile_moment[c]) > tol)
      bad << "profile moment[" << c << "] = " << m.profile_moment[c] << "; ";
    if (std::abs(m.momentum[c]) > tol)
      bad << "momentum[" << c << "] = " << m.momentum[c] << "; ";
  }
  for (int c = 0; c < 4; ++c)
    if (std::abs(m.weighted[c]) > tol)
      bad << "weighted moment[" << c << "] = " << m.weighted[c] << "; ";
  if (!bad.str().empty())
    throw std::domain_error("initial data rejected: " + bad.str());

  FluidState st;
  st.t = 0;
  // a = -eta sigma0 / (1 + eta sigma0)
  const Grid& g = spec.sigma0.grid();
  Field a(spec.sigma0.grid_ptr(), 1);
  const double* sg = spec.sigma0.phys(0);
  double* ap = a.phys_raw(0);
  for (std::size_t i = 0; i < g.npoints(); ++i)
    ap[i] = -spec.eta * sg[i] / (1 + spec.eta * sg[i]);
  st.a = std::move(a);
  st.u = spec.v0;
  st.grad_pi = Field::zeros(spec.v0.grid_ptr(), spec.v0.rank());
  return st;
}

Tendency rhs(const FluidState& state, double proj_tol, const Field* pi_guess) {
  const Grid& g = state.u.grid();
  const GridPtr& gp = state.u.grid_ptr();
  const int d = state.u.rank();
  const std::size_t n = g.npoints();

  const double* up[3] = {nullptr, nullptr, nullptr};
  for (int c = 0; c < d; ++c) up[c] = state.u.phys(c);
  const double* ap = state.a.phys(0);

  // all quadratic products in one batch: u_i u_j (i <= j), then a u_c
  const int npair = d * (d + 1) / 2;
  Field prod(gp, npair + d);
  {
    int c = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j, ++c) {
        double* pp = prod.phys_raw(c);
        for (std::size_t q = 0; q < n; ++q) pp[q] = up[i][q] * up[j][q];
      }
    for (int i = 0; i < d; ++i) {
      double* pp = prod.phys_raw(npair + i);
      for (std::size_t q = 0; q < n; ++q) pp[q] = ap[q] * up[i][q];
    }
  }
  dealias_inplace(prod);

  auto pair_index = [d](int i, int j) {
    if (i > j) std::swap(i, j);
    int c = 0;
    for (int a0 = 0; a0 < d; ++a0)
      for (int b0 = a0; b0 < d; ++b0, ++c)
        if (a0 == i && b0 == j) return c;
    return -1;
  };

  Tendency td;
  td.da_dt = Field::zeros(gp, 1);
  Field f(gp, d);

  // viscous stress (1+a) lap u, dealiased
  Field lap = laplacian(state.u);
  Field visc(gp, d);
  for (int c = 0; c < d; ++c) {
    const double* lp = lap.phys(c);
    double* vp = visc.phys_raw(c);
    for (std::size_t q = 0; q < n; ++q) vp[q] = (1 + ap[q]) * lp[q];
  }
  dealias_inplace(visc);

  std::complex<double>* da = td.da_dt.spec_raw(0);
  const std::complex<double>* au[3] = {nullptr, nullptr, nullptr};
  for (int c = 0; c < d; ++c) au[c] = prod.spec(npair + c);
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    mode_k(g, m, k);
    std::complex<double> dacc(0, 0);
    for (int c = 0; c < d; ++c)
      dacc += std::complex<double>(0, k[c]) * au[c][idx];
    da[idx] = -dacc;
  });
  for (int i = 0; i < d; ++i) {
    std::complex<double>* fi = f.spec_raw(i);
    const std::complex<double>* vi = visc.spec(i);
    const std::complex<double>* pj[3] = {nullptr, nullptr, nullptr};
    for (int j = 0; j < d; ++j) pj[j] = prod.spec(pair_index(i, j));
    for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
      double k[3];
      mode_k(g, m, k);
      std::complex<double> adv(0, 0);
      for (int j = 0; j < d; ++j)
        adv += std::complex<double>(0, k[j]) * pj[j][idx];
      fi[idx] = -adv + vi[idx];
    });
  }

  if (spec_is_zero(state.a)) {
    td.grad_pi = gradient_part(f);
    td.du_dt = lincomb(1, f, -1, td.grad_pi);
    td.proj_iterations = 0;
    td.proj_residual = 0;
    return td;
  }

  const Field* guess = pi_guess;
  if (!guess && has_field(state.grad_pi)) guess = &state.grad_pi;
  ProjectResult pr = modified_leray_project(state.a, f, proj_tol, 200, guess);
  if (!pr.converged)
    throw std::runtime_error("pressure projection failed to converge");
  td.du_dt = std::move(pr.f);
  td.grad_pi = std::move(pr.grad_pi);
  td.proj_iterations = pr.iterations;
  td.proj_residual = pr.residual;
  return td;
}

double cfl_dt(const FluidState& state, Scheme scheme) {
  const Grid& g = state.u.grid();
  const double h = g.min_spacing();
  const double u_inf = state.u.lp_norm(kInf);
  const double a_inf = state.a.lp_norm(kInf);
  const double adv = u_inf > 0 ? h / u_inf : kInf;
  // IFRK4 integrates laplace(u) exactly; only the a-weighted remainder
  // stays explicit
  const double diff_weight = scheme == Scheme::IFRK4 ? a_inf : 1 + a_inf;
  const double dif = diff_weight > 0 ? h * h / (2 * diff_weight) : kInf;
  return 0.4 * std::min(adv, dif);
}

namespace {

double grad_sq(const Field& u) {
  const double s = spectral_sobolev_norm(u, 1);
  return s * s;
}

FluidState stage_state(const FluidState& base, double c, double dt,
                       const Tendency& k) {
  FluidState s;
  s.t = base.t + c * dt;
  s.a = lincomb(1, base.a, c * dt, k.da_dt);
  s.u = lincomb(1, base.u, c * dt, k.du_dt);
  s.grad_pi = k.grad_pi;
  s.dissipated = base.dissipated;
  return s;
}

FluidState rk4_step(const FluidState& state, double dt,
                    const StepOptions& opts, Tendency* k1_out) {
  Tendency k1 = rhs(state, opts.proj_tol);
  FluidState s2 = stage_state(state, 0.5, dt, k1);
  Tendency k2 = rhs(s2, opts.proj_tol);
  FluidState s3 = stage_state(state, 0.5, dt, k2);
  Tendency k3 = rhs(s3, opts.proj_tol);
  FluidState s4 = stage_state(state, 1.0, dt, k3);
  Tendency k4 = rhs(s4, opts.proj_tol);

  FluidState out;
  out.t = state.t + dt;
  out.a = lincomb(1, state.a, dt / 6,
                  lincomb(1, lincomb(1, k1.da_dt, 2, k2.da_dt), 1,
                          lincomb(2, k3.da_dt, 1, k4.da_dt)));
  out.u = lincomb(1, state.u, dt / 6,
                  lincomb(1, lincomb(1, k1.du_dt, 2, k2.du_dt), 1,
                          lincomb(2, k3.du_dt, 1, k4.du_dt)));
  out.grad_pi = k4.grad_pi;
  // same RK4 quadrature applied to the dissipation integral
  out.dissipated =
      state.dissipated + dt / 6 *
                             (grad_sq(state.u) + 2 * grad_sq(s2.u) +
                              2 * grad_sq(s3.u) + grad_sq(s4.u));
  if (k1_out) *k1_out = std::move(k1);
  return out;
}

// classical RK4 on the heat-factored velocity e^{t |k|^2} u_hat and the
// raw density; per mode with E1 = e^{-|k|^2 dt/2}, E2 = E1^2 and
// N = du_dt + |k|^2 u_hat (everything rhs produces except the exact heat
// part), the stages read
//   ua = E1 (u + dt/2 N1),  ub = E1 u + dt/2 N2,  uc = E2 u + dt E1 N3,
//   u+ = E2 u + dt/6 (E2 N1 + 2 E1 (N2 + N3) + N4)
FluidState ifrk4_step(const FluidState& state, double dt,
                      const StepOptions& opts, Tendency* k1_out) {
  const Grid& g = state.u.grid();
  const GridPtr& gp = state.u.grid_ptr();
  const int d = state.u.rank();
  const std::size_t ns = g.nspec();

  std::vector<double> mu(ns), e1(ns);
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    mode_k(g, m, k);
    mu[idx] = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    e1[idx] = std::exp(-0.5 * dt * mu[idx]);
  });

  // out_u[i] = sum_j coef[j] * (phase[j] applied to in[j]), with N terms
  // given as (tendency du_dt, source stage u) pairs folded into N on the fly
  struct Term {
    const Field* du;   // tendency part (may be null)
    const Field* u;    // stage velocity it was evaluated at (for +mu u)
    const Field* raw;  // plain velocity term (may be null)
    double coef;
    int epow;  // 0, 1, or 2 powers of e1
  };
  const auto combine = [&](const std::vector<Term>& terms) {
    Field out(gp, d);
    for (int c = 0; c < d; ++c) {
      std::complex<double>* o = out.spec_raw(c);
      for (std::size_t i = 0; i < ns; ++i) o[i] = 0;
      for (const Term& tm : terms) {
        const std::complex<double>* du = tm.du ? tm.du->spec(c) : nullptr;
        const std::complex<double>* us = tm.u ? tm.u->spec(c) : nullptr;
        const std::complex<double>* rw = tm.raw ? tm.raw->spec(c) : nullptr;
        for (std::size_t i = 0; i < ns; ++i) {
          double ph = tm.coef;
          if (tm.epow == 1) ph *= e1[i];
          else if (tm.epow == 2) ph *= e1[i] * e1[i];
          if (rw) o[i] += ph * rw[i];
          else o[i] += ph * (du[i] + mu[i] * us[i]);
        }
      }
    }
    return out;
  };

  Tendency k1 = rhs(state, opts.proj_tol);
  FluidState s2;
  s2.t = state.t + 0.5 * dt;
  s2.a = lincomb(1, state.a, 0.5 * dt, k1.da_dt);
  s2.u = combine({{nullptr, nullptr, &state.u, 1.0, 1},
                  {&k1.du_dt, &state.u, nullptr, 0.5 * dt, 1}});
  s2.grad_pi = k1.grad_pi;

  Tendency k2 = rhs(s2, opts.proj_tol);
  FluidState s3;
  s3.t = state.t + 0.5 * dt;
  s3.a = lincomb(1, state.a, 0.5 * dt, k2.da_dt);
  s3.u = combine({{nullptr, nullptr, &state.u, 1.0, 1},
                  {&k2.du_dt, &s2.u, nullptr, 0.5 * dt, 0}});
  s3.grad_pi = k2.grad_pi;

  Tendency k3 = rhs(s3, opts.proj_tol);
  FluidState s4;
  s4.t = state.t + dt;
  s4.a = lincomb(1, state.a, dt, k3.da_dt);
  s4.u = combine({{nullptr, nullptr, &state.u, 1.0, 2},
                  {&k3.du_dt, &s3.u, nullptr, dt, 1}});
  s4.grad_pi = k3.grad_pi;

  Tendency k4 = rhs(s4, opts.proj_tol);

  FluidState out;
  out.t = state.t + dt;
  out.a = lincomb(1, state.a, dt / 6,
                  lincomb(1, lincomb(1, k1.da_dt, 2, k2.da_dt), 1,
                          lincomb(2, k3.da_dt, 1, k4.da_dt)));
  out.u = combine({{nullptr, nullptr, &state.u, 1.0, 2},
                   {&k1.du_dt, &state.u, nullptr, dt / 6, 2},
                   {&k2.du_dt, &s2.u, nullptr, dt / 3, 1},
                   {&k3.du_dt, &s3.u, nullptr, dt / 3, 1},
                   {&k4.du_dt, &s4.u, nullptr, dt / 6, 0}});
  out.grad_pi = k4.grad_pi;
  out.dissipated =
      state.dissipated + dt / 6 *
                             (grad_sq(state.u) + 2 * grad_sq(s2.u) +
                              2 * grad_sq(s3.u) + grad_sq(s4.u));
  if (k1_out) *k1_out = std::move(k1);
  return out;
}

}  // namespace

FluidState step(const FluidState& state, double dt, const StepOptions& opts,
                Tendency* k1_out) {
  if (dt <= 0) throw std::invalid_argument("step: dt must be positive");
  if (opts.check_cfl) {
    const double bound = cfl_dt(state, opts.scheme);
    if (dt > bound * (1 + 1e-9)) {
      std::ostringstream os;
      os << "step: dt " << dt << " violates the explicit bound; use dt <= "
         << bound;
      throw std::domain_error(os.str());
    }
  }
  return opts.scheme == Scheme::IFRK4 ? ifrk4_step(state, dt, opts, k1_out)
                                      : rk4_step(state, dt, opts, k1_out);
}

namespace {

SeriesRow make_row(const FluidState& s, const Tendency& k1, double E0_init) {
  const Grid& g = s.u.grid();
  SeriesRow row;
  row.t = s.t;
  std::vector<double> rho;
  density_values(s.a, rho);
  row.E0 = weighted_energy(rho, s.u);
  row.E1 = grad_sq(s.u);
  const double ut2 = weighted_energy(rho, k1.du_dt);
  row.E2 = ut2 + row.E1 * row.E1;

  // grad rho = -grad a / (1+a)^2, sup on the grid
  Field ga = grad(s.a);
  double grho_inf = 0;
  {
    const std::size_t n = g.npoints();
    const double* ap = s.a.phys(0);
    for (std::size_t i = 0; i < n; ++i) {
      double m2 = 0;
      for (int c = 0; c < ga.rank(); ++c)
        m2 += ga.phys(c)[i] * ga.phys(c)[i];
      const double den = (1 + ap[i]) * (1 + ap[i]);
      grho_inf = std::max(grho_inf, std::sqrt(m2) / den);
    }
  }
  row.E3 = grad_sq(k1.du_dt) + std::pow(row.E2, 1.5) + row.E2 * grho_inf * grho_inf;

  const double un = s.u.l2_norm();
  row.u_l2 = un;
  row.u_inf = s.u.lp_norm(kInf);
  row.div_residual = un > 0 ? div(s.u).l2_norm() / un : 0;
  row.energy_balance_drift =
      E0_init > 0
          ? std::abs(0.5 * row.E0 + s.dissipated - 0.5 * E0_init) / E0_init
          : 0;

  std::vector<double> vr(g.npoints());
  const double* ap = s.a.phys(0);
  row.rho_min = kInf;
  row.rho_max = -kInf;
  for (std::size_t i = 0; i < g.npoints(); ++i) {
    const double rho_i = 1.0 / (1.0 + ap[i]);
    vr[i] = rho_i - 1.0;
    row.rho_min = std::min(row.rho_min, rho_i);
    row.rho_max = std::max(row.rho_max, rho_i);
  }
  row.varrho_l2 = lp_quadrature(g, vr, 2);
  row.varrho_l4 = lp_quadrature(g, vr, 4);
  row.varrho_linf = lp_quadrature(g, vr, kInf);
  row.proj_iterations = k1.proj_iterations;
  return row;
}

}  // namespace

Trajectory run(FluidState state, double T, const RunOptions& opts) {
  if (T < 0) throw std::invalid_argument("run: negative horizon");
  Trajectory tr;
  if (!has_field(state.grad_pi))
    state.grad_pi = Field::zeros(state.u.grid_ptr(), state.u.rank());
  if (opts.dt > 0 && opts.dt > cfl_dt(state, opts.scheme) * (1 + 1e-9)) {
    std::ostringstream os;
    os << "run: dt " << opts.dt << " violates the explicit bound "
       << cfl_dt(state, opts.scheme);
    throw std::domain_error(os.str());
  }

  const double snap_dt = opts.snapshot_every;
  double series_dt = opts.series_every;
  if (series_dt == 0 && snap_dt > 0) series_dt = snap_dt;

  auto push_snapshot = [&](const FluidState& s) {
    if (!tr.snaps.empty() && std::abs(tr.snaps.back().t - s.t) < 1e-14) return;
    tr.snaps.push_back({s.t, spec_copy(s.a), spec_copy(s.u)});
  };

  double E0_init = -1;
  auto emit = [&](const FluidState& s, const Tendency& k1) {
    SeriesRow row = make_row(s, k1, E0_init < 0 ? -1 : E0_init);
    if (E0_init < 0) {
      E0_init = row.E0;
      row.energy_balance_drift = 0;
    }
    tr.series.push_back(row);
    if (opts.sampler) opts.sampler(s, k1);
  };

  push_snapshot(state);
  int snap_idx = 1, series_idx = 1;
  bool series_due = true;  // always sample t = 0

  const double t_end = T;
  while (state.t < t_end - 1e-12) {
    double dt = opts.dt > 0 ? opts.dt : cfl_dt(state, opts.scheme);
    dt = std::min(dt, t_end - state.t);
    if (snap_dt > 0) {
      const double due = snap_idx * snap_dt;
      if (due - state.t > 1e-12) dt = std::min(dt, due - state.t);
    }
    if (series_dt > 0) {
      const double due = series_idx * series_dt;
      if (due - state.t > 1e-12) dt = std::min(dt, due - state.t);
    }

    Tendency k1;
    FluidState next;
    try {
      next = step(state, dt, {opts.proj_tol, true, opts.scheme}, &k1);
    } catch (const std::exception& e) {
      tr.aborted = true;
      tr.abort_reason = e.what();
      break;
    }
    if (series_due) emit(state, k1);
    series_due = false;

    if (!std::isfinite(next.u.l2_norm()) ||
        !std::isfinite(next.a.l2_norm())) {
      tr.aborted = true;
      tr.abort_reason = "state became non-finite";
      break;
    }
    state = std::move(next);

    if (snap_dt > 0 && state.t >= snap_idx * snap_dt - 1e-12) {
      push_snapshot(state);
      ++snap_idx;
    }
    if (series_dt > 0 && state.t >= series_idx * series_dt - 1e-12) {
      series_due = true;
      ++series_idx;
    } else if (series_dt == 0) {
      series_due = true;
    }
  }

  // final sample and snapshot
  if (!tr.aborted) {
    Tendency k1 = rhs(state, opts.proj_tol);
    emit(state, k1);
    push_snapshot(state);
  }
  tr.final_state = std::move(state);
  return tr;
}

ConservationReport conservation_report(const Trajectory& traj) {
  if (traj.series.size() < 2)
    throw std::invalid_argument("conservation_report: need >= 2 samples");
  ConservationReport r;
  const SeriesRow& first = traj.series.front();
  const auto rel = [](double now, double ref) {
    return std::abs(now - ref) / std::max(std::abs(ref), 1e-300);
  };
  double rmin0 = first.rho_min, rmax0 = first.rho_max;
  const double range = std::max(rmax0 - rmin0, 1e-14);
  for (const SeriesRow& row : traj.series) {
    if (first.varrho_l2 > 0)
      r.varrho_drift_l2 =
          std::max(r.varrho_drift_l2, rel(row.varrho_l2, first.varrho_l2));
    if (first.varrho_l4 > 0)
      r.varrho_drift_l4 =
          std::max(r.varrho_drift_l4, rel(row.varrho_l4, first.varrho_l4));
    if (first.varrho_linf > 0)
      r.varrho_drift_linf = std::max(r.varrho_drift_linf,
                                     rel(row.varrho_linf, first.varrho_linf));
    const double excursion =
        std::max(std::max(rmin0 - row.rho_min, 0.0),
                 std::max(row.rho_max - rmax0, 0.0)) /
        range;
    r.rho_excursion = std::max(r.rho_excursion, excursion);
    r.energy_balance_drift =
        std::max(r.energy_balance_drift, row.energy_balance_drift);
    r.max_div_residual = std::max(r.max_div_residual, row.div_residual);
  }
  return r;
}

EnergyLedger energy_ledger(const Trajectory& traj) {
  if (traj.series.empty())
    throw std::invalid_argument("energy_ledger: empty series");
  EnergyLedger led;
  for (const SeriesRow& row : traj.series) {
    led.t.push_back(row.t);
    led.E0.push_back(row.E0);
    led.E1.push_back(row.E1);
    led.E2.push_back(row.E2);
    led.E3.push_back(row.E3);
  }
  // U0 from the stored initial snapshot, coordinates about the box center
  const Snapshot& s0 = traj.snaps.front();
  const Grid& g = s0.u.grid();
  const int n0 = g.npts(0), n1 = g.npts(1);
  const double h0 = g.len(0) / n0, h1 = g.len(1) / n1;
  const double c0 = g.len(0) / 2, c1 = g.len(1) / 2;
  const double dv = g.volume() / g.npoints();
  const double* u0 = s0.u.phys(0);
  const double* u1 = s0.u.phys(1);
  double U0 = 0;
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < n1; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * n1 + j;
      U0 += std::hypot(i * h0 - c0, j * h1 - c1) *
            std::hypot(u0[idx], u1[idx]) * dv;
    }
  led.U0 = U0;

  const double E0 = led.E0.front(), E1 = led.E1.front(),
               E2 = led.E2.front(), E3 = led.E3.front();
  const double vr0 = traj.series.front().varrho_l2;
  const auto ratio = [](double num, double den) {
    return den > 0 ? num / den : 0.0;
  };
  led.T0 = std::max(ratio(U0, E0), vr0 * vr0);
  led.T1 = std::max(led.T0, ratio(E0, E1));
  led.T2 = std::max(led.T1, ratio(E2, E1));
  led.T3 = std::max(led.T2, ratio(E2, E3));
  return led;
}

DuhamelReport duhamel_residual(const Trajectory& traj, double tol) {
  const std::size_t n = traj.snaps.size();
  if (n < 3) throw std::invalid_argument("duhamel_residual: need >= 3 snaps");
  const Grid& g = traj.snaps[0].u.grid();
  const GridPtr& gp = traj.snaps[0].u.grid_ptr();
  const int d = traj.snaps[0].u.rank();
  const std::size_t ns = g.nspec();
  const int nlast = g.npts(g.dims - 1) / 2 + 1;

  // per-mode |k|^2 and r2c weights
  std::vector<double> mu(ns, 0), w(ns, 0);
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    mode_k(g, m, k);
    mu[idx] = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    w[idx] = r2c_weight(g, idx % nlast);
  });

  // P(varrho u) and P(div(rho u x u)) for one snapshot
  const auto assemble = [&](const Snapshot& s, Field& A, Field& B) {
    const std::size_t np = g.npoints();
    const double* ap = s.a.phys(0);
    Field ru(gp, d), vu(gp, d);
    for (int c = 0; c < d; ++c) {
      const double* up = s.u.phys(c);
      double* r1 = ru.phys_raw(c);
      double* r2 = vu.phys_raw(c);
      for (std::size_t i = 0; i < np; ++i) {
        const double rho = 1.0 / (1.0 + ap[i]);
        r1[i] = rho * up[i];
        r2[i] = (rho - 1.0) * up[i];
      }
    }
    dealias_inplace(ru);
    dealias_inplace(vu);
    A = leray_project(vu);
    // div(rho u x u): products (rho u)_i u_j, then spectral divergence
    Field T(gp, d * d);
    for (int i = 0; i < d; ++i) {
      const double* mi = ru.phys(i);
      for (int j = 0; j < d; ++j) {
        const double* uj = s.u.phys(j);
        double* tp = T.phys_raw(i * d + j);
        for (std::size_t q = 0; q < np; ++q) tp[q] = mi[q] * uj[q];
      }
    }
    dealias_inplace(T);
    Field dv(gp, d);
    for (int i = 0; i < d; ++i) {
      std::complex<double>* o = dv.spec_raw(i);
      for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
        double k[3];
        mode_k(g, m, k);
        std::complex<double> acc(0, 0);
        for (int j = 0; j < d; ++j)
          acc += std::complex<double>(0, k[j]) * T.spec(i * d + j)[idx];
        o[idx] = acc;
      });
    }
    B = leray_project(dv);
  };

  // P(rho0 u0)
  Field P0(gp, d);
  {
    const std::size_t np = g.npoints();
    const double* ap = traj.snaps[0].a.phys(0);
    Field ru(gp, d);
    for (int c = 0; c < d; ++c) {
      const double* up = traj.snaps[0].u.phys(c);
      double* r1 = ru.phys_raw(c);
      for (std::size_t i = 0; i < np; ++i) r1[i] = up[i] / (1.0 + ap[i]);
    }
    dealias_inplace(ru);
    P0 = leray_project(ru);
  }

  struct Accum {
    std::vector<std::complex<double>> I3, I4;  // d * nspec each
    std::vector<double> heat;                  // e^{-t mu}
  };
  const auto init_accum = [&](Accum& ac) {
    ac.I3.assign(d * ns, {0, 0});
    ac.I4.assign(d * ns, {0, 0});
    ac.heat.assign(ns, 1.0);
  };
  const auto advance = [&](Accum& ac, double dt, const Field& A_old,
                           const Field& B_old, const Field& A_new,
                           const Field& B_new) {
    for (std::size_t i = 0; i < ns; ++i) {
      double Aw, Bw;
      heat_trapezoid_weights(dt, mu[i], Aw, Bw);
      const double decay = std::exp(-dt * mu[i]);
      ac.heat[i] *= decay;
      for (int c = 0; c < d; ++c) {
        std::complex<double>& i3 = ac.I3[c * ns + i];
        std::complex<double>& i4 = ac.I4[c * ns + i];
        i3 = decay * i3 + Bw * (mu[i] * A_old.spec(c)[i]) +
             Aw * (mu[i] * A_new.spec(c)[i]);
        i4 = decay * i4 + Bw * B_old.spec(c)[i] + Aw * B_new.spec(c)[i];
      }
    }
  };
  const auto residual_at = [&](const Accum& ac, const Snapshot& s,
                               const Field& A) {
    double num = 0, den = 0;
    for (int c = 0; c < d; ++c) {
      const std::complex<double>* uc = s.u.spec(c);
      const std::complex<double>* p0 = P0.spec(c);
      const std::complex<double>* ac3 = &ac.I3[c * ns];
      const std::complex<double>* ac4 = &ac.I4[c * ns];
      const std::complex<double>* av = A.spec(c);
      for (std::size_t i = 0; i < ns; ++i) {
        const std::complex<double> rhs_val =
            ac.heat[i] * p0[i] - av[i] + ac3[i] - ac4[i];
        num += w[i] * std::norm(uc[i] - rhs_val);
        den += w[i] * std::norm(uc[i]);
      }
    }
    return den > 0 ? std::sqrt(num / den) : 0.0;
  };

  Accum fine, coarse;
  init_accum(fine);
  init_accum(coarse);
  std::vector<Field> A(n), B(n);
  assemble(traj.snaps[0], A[0], B[0]);

  DuhamelReport rep;
  double fine_at_coarse = 0, coarse_res = 0;
  for (std::size_t i = 1; i < n; ++i) {
    assemble(traj.snaps[i], A[i], B[i]);
    const double dt = traj.snaps[i].t - traj.snaps[i - 1].t;
    if (dt <= 0) throw std::invalid_argument("duhamel: times must increase");
    advance(fine, dt, A[i - 1], B[i - 1], A[i], B[i]);
    rep.max_rel_residual =
        std::max(rep.max_rel_residual, residual_at(fine, traj.snaps[i], A[i]));
    if (i % 2 == 0) {
      const double dt2 = traj.snaps[i].t - traj.snaps[i - 2].t;
      advance(coarse, dt2, A[i - 2], B[i - 2], A[i], B[i]);
      fine_at_coarse = residual_at(fine, traj.snaps[i], A[i]);
      coarse_res = residual_at(coarse, traj.snaps[i], A[i]);
    }
    // drop fields no longer needed by either accumulator
    if (i >= 2) {
      A[i - 2] = Field();
      B[i - 2] = Field();
    }
  }
  rep.quadrature_estimate = std::abs(coarse_res - fine_at_coarse) / 3.0;
  rep.warned = rep.quadrature_estimate > tol;
  return rep;
}

double split_cutoff_radius(double t, double T_param, GProfile profile,
                           double alpha) {
  const double tau = t / T_param;
  const double bracket = std::numbers::e + tau;
  double g2;
  if (profile == GProfile::PowerAlpha)
    g2 = alpha / bracket;
  else
    g2 = 3.0 / (bracket * std::log(bracket));
  return std::sqrt(2 * g2 / T_param);
}

SplitEnergy low_frequency_split(const FluidState& state, double T_param,
                                GProfile profile, double alpha) {
  if (T_param <= 0)
    throw std::invalid_argument("low_frequency_split: T must be positive");
  return sharp_split_energy(
      state.u, split_cutoff_radius(state.t, T_param, profile, alpha));
}

InitialSpec synthesize_decay_data(const GridPtr& g,
                                  const VortexPairParams& params) {
  if (g->dims != 2)
    throw std::invalid_argument("synthesize_decay_data: 2D grids only");
  const double c0 = g->len(0) / 2, c1 = g->len(1) / 2;
  const double d = params.separation / 2;
  const double s2 = params.psi_width * params.psi_width;

  Field psi = Field::from_function(
      g, 1, [&](int, const std::array<double, 3>& x) {
        const double y0 = x[0] - c0, y1 = x[1] - c1;
        const double rp = (y0 - d) * (y0 - d) + y1 * y1;
        const double rm = (y0 + d) * (y0 + d) + y1 * y1;
        return std::exp(-rp / (2 * s2)) - std::exp(-rm / (2 * s2));
      });
  Field v(g, 2);
  {
    Field d0 = deriv(psi, 0), d1 = deriv(psi, 1);
    const std::size_t ns = g->nspec();
    std::memcpy(v.spec_raw(0), d1.spec(0), ns * sizeof(std::complex<double>));
    std::memcpy(v.spec_raw(1), d0.spec(0), ns * sizeof(std::complex<double>));
    for (std::size_t i = 0; i < ns; ++i) v.spec_raw(0)[i] *= -1.0;
  }
  const double vmax = v.lp_norm(kInf);
  if (vmax > 0) v = scaled(v, params.amplitude / vmax);

  // compensated density bump: the wide negative shell cancels the weighted
  // moment of the co-located vortex, closed form from Gaussian integrals
  const double sa = params.density_width, sb = 2 * params.density_width;
  const double Aa = 0.5 / (sa * sa) + 0.5 / s2;
  const double Ab = 0.5 / (sb * sb) + 0.5 / s2;
  const double lambda = (Ab / Aa) * (Ab / Aa);
  Field sigma0 = Field::from_function(
      g, 1, [&](int, const std::array<double, 3>& x) {
        const double y0 = x[0] - c0, y1 = x[1] - c1;
        const auto bump = [&](double dy) {
          const double r2 = (y0 - dy) * (y0 - dy) + y1 * y1;
          return std::exp(-r2 / (2 * sa * sa)) -
                 lambda * std::exp(-r2 / (2 * sb * sb));
        };
        return bump(d) + bump(-d);
      });
  const double smax = sigma0.lp_norm(kInf);
  if (smax > 0) sigma0 = scaled(sigma0, 1.0 / smax);

  InitialSpec spec;
  spec.sigma0 = std::move(sigma0);
  spec.v0 = std::move(v);
  spec.eta = params.eta;
  spec.moment_tolerance = params.moment_tolerance;
  return spec;
}

}  // namespace strata
