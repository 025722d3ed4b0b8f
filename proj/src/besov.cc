#include "strata/besov.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "strata/ops.h"

namespace strata {
namespace {

bool spec_all_zero(const Field& f) {
  for (int c = 0; c < f.rank(); ++c) {
    const std::complex<double>* s = f.spec(c);
    for (std::size_t i = 0; i < f.grid().nspec(); ++i)
      if (s[i] != 0.0) return false;
  }
  return true;
}

double lp_or_zero(const Field& block, double p) {
  if (spec_all_zero(block)) return 0;
  return block.lp_norm(p);
}

void finalize_truncation(NormReport& r, int k_top, int l_top, bool aniso) {
  double total = 0, top = 0;
  for (const auto& sc : r.shell_contributions) {
    total += sc.value;
    const bool outer = aniso ? (sc.k >= k_top - 1 || sc.l >= l_top - 1)
                             : (sc.k >= k_top - 1);
    if (outer) top += sc.value;
  }
  r.truncation_mass = total > 0 ? top / total : 0;
  r.converged = r.truncation_mass < 0.05;
}

// stack all first derivatives of every component into one field
Field stack_gradient(const Field& f, bool horizontal_only) {
  const int na = horizontal_only ? 2 : f.grid().dims;
  Field out(f.grid_ptr(), f.rank() * na);
  for (int c = 0; c < f.rank(); ++c) {
    Field comp = f.component(c);
    for (int a = 0; a < na; ++a) {
      Field d = deriv(comp, a);
      std::memcpy(out.spec_raw(c * na + a), d.spec(0),
                  f.grid().nspec() * sizeof(std::complex<double>));
    }
  }
  return out;
}

}  // namespace

NormReport iso_besov_norm(const Field& f, const BesovIndex& idx, std::string name) {
  NormReport rep;
  rep.name = std::move(name);
  Field fd = dealiased(f);
  ShellRange r = shell_range(f.grid(), Axes::Iso);
  double lr_acc = 0;
  for (int j = r.j_min; j <= r.j_max; ++j) {
    Field b = dyadic_block(fd, Axes::Iso, j);
    const double lp = lp_or_zero(b, idx.p);
    const double contrib = std::exp2(idx.s * j) * lp;
    rep.shell_contributions.push_back({j, 0, contrib});
    lr_acc += idx.r == 1 ? contrib : std::pow(contrib, idx.r);
  }
  rep.value = idx.r == 1 ? lr_acc : std::pow(lr_acc, 1.0 / idx.r);
  finalize_truncation(rep, r.j_max, 0, false);
  return rep;
}

NormReport aniso_besov_norm(const Field& f, const BesovIndex& idx,
                            std::string name) {
  if (f.grid().dims != 3)
    throw std::invalid_argument("aniso_besov_norm: 3D slab field required");
  NormReport rep;
  rep.name = std::move(name);
  Field fd = dealiased(f);
  ShellRange rh = shell_range(f.grid(), Axes::Horizontal);
  ShellRange rv = shell_range(f.grid(), Axes::Vertical);
  double acc = 0;
  for (int k = rh.j_min; k <= rh.j_max; ++k) {
    Field bh = dyadic_block(fd, Axes::Horizontal, k);
    const bool empty_h = spec_all_zero(bh);
    for (int l = rv.j_min; l <= rv.j_max; ++l) {
      double lp = 0;
      if (!empty_h) {
        Field b = dyadic_block(bh, Axes::Vertical, l);
        lp = lp_or_zero(b, idx.p);
      }
      const double contrib = std::exp2(idx.s * k + idx.s_prime * l) * lp;
      // zero (k, l) cells carry no information; keep the table sparse
      if (contrib != 0) rep.shell_contributions.push_back({k, l, contrib});
      acc += contrib;
    }
  }
  rep.value = acc;
  finalize_truncation(rep, rh.j_max, rv.j_max, true);
  return rep;
}

std::vector<double> log_time_grid(double t0, double t1, int per_octave) {
  if (t0 <= 0 || t1 <= t0 || per_octave < 1)
    throw std::invalid_argument("log_time_grid: bad range");
  std::vector<double> g;
  const double l0 = std::log2(t0), l1 = std::log2(t1);
  const int n = std::max(32, static_cast<int>(std::ceil((l1 - l0) * per_octave)));
  for (int i = 0; i <= n; ++i)
    g.push_back(std::exp2(l0 + (l1 - l0) * i / n));
  return g;
}

double heatflow_norm(const Field& f, const std::vector<double>& t_grid) {
  if (t_grid.size() < 32)
    throw std::invalid_argument("heatflow_norm: need >= 32 grid points");
  double best = 0;
  for (double t : t_grid)
    best = std::max(best, std::sqrt(t) * heat_propagate(f, t).lp_norm(INFINITY));
  return best;
}

double mixed_norm(const Field& f, bool horizontal_outer, double p_outer,
                  double q_inner) {
  const Grid& g = f.grid();
  if (g.dims != 3)
    throw std::invalid_argument("mixed_norm: 3D slab field required");
  const int nv = g.npts(0);
  const std::size_t nh = static_cast<std::size_t>(g.npts(1)) * g.npts(2);
  const double hv = g.len(0) / nv;
  const double ah = g.len(1) * g.len(2) / static_cast<double>(nh);
  f.ensure_phys();
  // pointwise magnitude
  std::vector<double> mag(g.npoints());
  for (int c = 0; c < f.rank(); ++c) {
    const double* p = f.phys(c);
    for (std::size_t i = 0; i < mag.size(); ++i)
      mag[i] += p[i] * p[i];
  }
  for (double& m : mag) m = std::sqrt(m);

  auto reduce = [](const std::vector<double>& vals, double p, double cell) {
    if (std::isinf(p)) return *std::max_element(vals.begin(), vals.end());
    double acc = 0;
    for (double v : vals) acc += std::pow(v, p);
    return std::pow(acc * cell, 1.0 / p);
  };

  if (horizontal_outer) {
    // inner L^q over the vertical line above each horizontal point
    std::vector<double> inner(nh), line(nv);
    for (std::size_t ih = 0; ih < nh; ++ih) {
      for (int iv = 0; iv < nv; ++iv) line[iv] = mag[iv * nh + ih];
      inner[ih] = reduce(line, q_inner, hv);
    }
    return reduce(inner, p_outer, ah);
  }
  std::vector<double> inner(nv), sheet(nh);
  for (int iv = 0; iv < nv; ++iv) {
    std::copy(mag.begin() + iv * nh, mag.begin() + (iv + 1) * nh, sheet.begin());
    inner[iv] = reduce(sheet, q_inner, ah);
  }
  return reduce(inner, p_outer, hv);
}

namespace {

// max over multi-indices |alpha| = n of the mixed norm of d_h^alpha f
double max_h_deriv_mixed(const Field& f, int n, double p, double q) {
  if (n == 0) return mixed_norm(f, true, p, q);
  double best = 0;
  for (int a1 = 0; a1 <= n; ++a1) {
    Field d = f;
    for (int i = 0; i < a1; ++i) d = deriv(d, 0);
    for (int i = 0; i < n - a1; ++i) d = deriv(d, 1);
    best = std::max(best, mixed_norm(d, true, p, q));
  }
  return best;
}

Field z_deriv(const Field& f, int n) {
  Field d = f;
  for (int i = 0; i < n; ++i) d = deriv(d, 2);
  return d;
}

}  // namespace

BernsteinReport bernstein_report(const std::vector<std::pair<int, Field>>& family,
                                 BernKind kind, double p1, double p2, double q1,
                                 double q2, int order) {
  if (family.empty())
    throw std::invalid_argument("bernstein_report: empty field family");
  auto inv = [](double p) { return std::isinf(p) ? 0.0 : 1.0 / p; };
  BernsteinReport rep;
  for (const auto& [shell, a] : family) {
    BernsteinRow row;
    row.shell = shell;
    switch (kind) {
      case BernKind::HBall:
        row.lhs = max_h_deriv_mixed(a, order, p1, q1);
        row.rhs = std::exp2(shell * (order + 2 * (inv(p2) - inv(p1)))) *
                  mixed_norm(a, true, p2, q1);
        break;
      case BernKind::VBall:
        row.lhs = mixed_norm(z_deriv(a, order), true, p1, q1);
        row.rhs = std::exp2(shell * (order + (inv(q2) - inv(q1)))) *
                  mixed_norm(a, true, p1, q2);
        break;
      case BernKind::HRing:
        row.lhs = mixed_norm(a, true, p1, q1);
        row.rhs = std::exp2(-shell * order) * max_h_deriv_mixed(a, order, p1, q1);
        break;
      case BernKind::VRing:
        row.lhs = mixed_norm(a, true, p1, q1);
        row.rhs = std::exp2(-shell * order) *
                  mixed_norm(z_deriv(a, order), true, p1, q1);
        break;
    }
    row.ratio = row.rhs > 0 ? row.lhs / row.rhs : 0;
    rep.rows.push_back(row);
  }
  rep.max_ratio = rep.rows[0].ratio;
  rep.min_ratio = rep.rows[0].ratio;
  for (const auto& r : rep.rows) {
    rep.max_ratio = std::max(rep.max_ratio, r.ratio);
    rep.min_ratio = std::min(rep.min_ratio, r.ratio);
  }
  return rep;
}

std::vector<std::pair<int, Field>> make_shell_family(GridPtr g, Axes axes,
                                                     std::uint64_t seed) {
  ShellRange r = shell_range(*g, axes);
  // stay clear of the two outermost shells, where the dealias mask bites
  std::vector<std::pair<int, Field>> fam;
  const double k0 = 0.5 * mode_radius(*g, axes, {g->keep_max(0), g->keep_max(1),
                                                 g->keep_max(2 % g->dims)});
  for (int j = r.j_min; j <= r.j_max - 2; ++j) {
    Field base = random_field(g, 1, seed + static_cast<std::uint64_t>(j - r.j_min),
                              k0);
    Field b = dyadic_block(base, axes, j);
    const double n2 = b.l2_norm();
    if (n2 == 0) continue;
    fam.emplace_back(j, scaled(b, 1.0 / n2));
  }
  if (fam.empty())
    throw std::invalid_argument("make_shell_family: no resolvable shells");
  return fam;
}

InterpolationReport interpolation_report(const Field& f, double p, double q,
                                         double s1, double s2) {
  if (f.lp_norm(INFINITY) == 0)
    throw std::invalid_argument("interpolation_report: zero field");
  InterpolationReport rep;
  // sup-norm interpolation: ||f||_inf against the 2/3-1/3 product of the
  // anisotropic norm of f and of grad_h f
  BesovIndex i1{p, -0.5 + 2 / p, 1 / p, 1};
  BesovIndex i2{p, 2.0 / 3.0, 1 / p, 1};
  const double A = aniso_besov_norm(f, i1).value;
  const double B = aniso_besov_norm(stack_gradient(f, true), i2).value;
  const double denom = std::pow(A, 2.0 / 3.0) * std::pow(B, 1.0 / 3.0);
  if (denom == 0)
    throw std::invalid_argument("interpolation_report: degenerate field");
  rep.ratio_sup = f.lp_norm(INFINITY) / denom;

  // four-factor mixed-norm interpolation at caller indices
  const double sig = s1 + 2 * (1 / q - 1 / p);
  if (sig < 0 || sig > 1 || s2 < 0 || s2 > 1)
    throw std::invalid_argument("interpolation_report: exponents out of range");
  const double m00 = mixed_norm(f, false, p, q);
  const double m0z = mixed_norm(z_deriv(f, 1), false, p, q);
  const double mh0 = mixed_norm(stack_gradient(f, true), false, p, q);
  const double mhz = mixed_norm(stack_gradient(z_deriv(f, 1), true), false, p, q);
  const double rhs = std::pow(m00, (1 - sig) * (1 - s2)) *
                     std::pow(m0z, (1 - sig) * s2) *
                     std::pow(mh0, sig * (1 - s2)) * std::pow(mhz, sig * s2);
  BesovIndex it{p, s1, s2, 1};
  rep.ratio_mixed = rhs > 0 ? aniso_besov_norm(f, it).value / rhs : 0;
  return rep;
}

double product_law_report(const Field& a, const Field& b, double p, double s1,
                          double s2, double s1p, double s2p) {
  if (s1 + s1p <= 0 || s2 + s2p <= 0)
    throw std::invalid_argument("product_law_report: index sums must be positive");
  const double tol = 1e-12;
  if (s1 > 2 / p + tol || s1p > 2 / p + tol || s2 > 1 / p + tol || s2p > 1 / p + tol)
    throw std::invalid_argument("product_law_report: index exceeds 2/p resp. 1/p");
  BesovIndex ia{p, s1, s2, 1}, ib{p, s1p, s2p, 1};
  const double na = aniso_besov_norm(a, ia).value;
  const double nb = aniso_besov_norm(b, ib).value;
  if (na == 0 || nb == 0)
    throw std::invalid_argument("product_law_report: factor without shell content");
  BesovIndex ip{p, s1 + s1p - 2 / p, s2 + s2p - 1 / p, 1};
  return aniso_besov_norm(multiply(a, b), ip).value / (na * nb);
}

// per-interval weights for int e^{-(dt - s) mu} (linear forcing) ds:
// weight of the newer sample (A) and the older one (B)
void heat_trapezoid_weights(double dt, double mu, double& A, double& B) {
  const double x = dt * mu;
  if (x < 1e-3) {
    A = dt * (0.5 - x / 3 + x * x / 8);
    B = dt * (0.5 - x / 6 + x * x / 24);
    return;
  }
  const double e = std::exp(-x);
  A = (1 - e * (1 + x)) / (dt * mu * mu);
  B = (1 - e) / mu - A;
}

std::vector<Field> duhamel_heat_integrals(const ForcingTrajectory& traj) {
  const std::size_t n = traj.times.size();
  if (n == 0 || traj.snaps.size() != n)
    throw std::invalid_argument("duhamel: malformed trajectory");
  for (std::size_t i = 1; i < n; ++i)
    if (traj.times[i] <= traj.times[i - 1])
      throw std::invalid_argument("duhamel: times must increase");
  const Field& f0 = traj.snaps[0];
  const Grid& g = f0.grid();
  const std::size_t ns = g.nspec();

  // |k|^2 per mode
  std::vector<double> mu(ns);
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k2 = 0;
    for (int ax = 0; ax < g.dims; ++ax) {
      const double k = g.k_unit(ax) * m[ax];
      k2 += k * k;
    }
    mu[idx] = k2;
  });

  std::vector<Field> out;
  out.reserve(n);
  out.push_back(Field::zeros(f0.grid_ptr(), f0.rank()));
  std::vector<double> ef(ns), Aw(ns), Bw(ns);
  double last_dt = -1;
  for (std::size_t i = 1; i < n; ++i) {
    const double dt = traj.times[i] - traj.times[i - 1];
    if (dt != last_dt) {
      for (std::size_t m = 0; m < ns; ++m) {
        ef[m] = std::exp(-dt * mu[m]);
        heat_trapezoid_weights(dt, mu[m], Aw[m], Bw[m]);
      }
      last_dt = dt;
    }
    Field u(f0.grid_ptr(), f0.rank());
    for (int c = 0; c < f0.rank(); ++c) {
      const std::complex<double>* up = out.back().spec(c);
      const std::complex<double>* fp0 = traj.snaps[i - 1].spec(c);
      const std::complex<double>* fp1 = traj.snaps[i].spec(c);
      std::complex<double>* o = u.spec_raw(c);
      for (std::size_t m = 0; m < ns; ++m)
        o[m] = ef[m] * up[m] + Bw[m] * fp0[m] + Aw[m] * fp1[m];
    }
    out.push_back(std::move(u));
  }
  return out;
}

namespace {

double time_integral(const std::vector<double>& t, const std::vector<double>& v,
                     double q, int stride = 1) {
  // trapezoid of v^q, then ^(1/q)
  double acc = 0;
  std::size_t prev = 0;
  for (std::size_t i = stride; i < t.size(); i += stride) {
    const double dt = t[i] - t[prev];
    acc += 0.5 * dt * (std::pow(v[prev], q) + std::pow(v[i], q));
    prev = i;
  }
  // close the window at the final sample when stride skips it
  if (prev != t.size() - 1 && t.size() > 1) {
    const std::size_t i = t.size() - 1;
    acc += 0.5 * (t[i] - t[prev]) * (std::pow(v[prev], q) + std::pow(v[i], q));
  }
  return std::pow(acc, 1.0 / q);
}

}  // namespace

ForcingNormReport forcing_norm(const ForcingTrajectory& traj, double T, double p,
                               double delta,
                               const std::vector<std::array<double, 2>>* alpha_beta) {
  if (!(p > 3 && p < 4))
    throw std::invalid_argument("forcing_norm: p must lie in (3, 4)");
  if (!(delta > 0 && delta < 1 - 3 / p))
    throw std::invalid_argument("forcing_norm: delta outside (0, 1 - 3/p)");
  const Grid& g = traj.snaps.at(0).grid();
  if (g.dims != 3)
    throw std::invalid_argument("forcing_norm: 3D slab trajectory required");

  std::vector<Field> U = duhamel_heat_integrals(traj);
  // evaluate on the snapshot prefix inside [0, T]
  std::size_t n = traj.times.size();
  while (n > 1 && traj.times[n - 1] > T + 1e-12) --n;
  const std::vector<double> tt(traj.times.begin(), traj.times.begin() + n);
  std::vector<double> n1(n), n2(n), n3(n), n4(n), n5(n);
  BesovIndex i1{p, -0.5 + 2 / p, 1 / p, 1};
  BesovIndex i2{p, 2 / p, 1 / p, 1};
  BesovIndex i5{p, -1 + delta + 3 / p, -delta, 1};
  double trunc[5] = {0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    NormReport r1 = aniso_besov_norm(U[i], i1);
    NormReport r2 = aniso_besov_norm(U[i], i2);
    NormReport r3 = aniso_besov_norm(z_deriv(U[i], 1), i1);
    NormReport r4 = aniso_besov_norm(stack_gradient(U[i], false), i2);
    NormReport r5 = aniso_besov_norm(z_deriv(U[i], 2), i5);
    n1[i] = r1.value;
    n2[i] = r2.value;
    n3[i] = r3.value;
    n4[i] = r4.value;
    n5[i] = r5.value;
    trunc[0] = std::max(trunc[0], r1.truncation_mass);
    trunc[1] = std::max(trunc[1], r2.truncation_mass);
    trunc[2] = std::max(trunc[2], r3.truncation_mass);
    trunc[3] = std::max(trunc[3], r4.truncation_mass);
    trunc[4] = std::max(trunc[4], r5.truncation_mass);
  }
  ForcingNormReport rep;
  const char* names[5] = {"L4_B(-1/2+2/p,1/p)", "L2_B(2/p,1/p)",
                          "L4/3_B(-1/2+2/p,1/p) dz", "L1_B(2/p,1/p) grad",
                          "L1_B(-1+d+3/p,-d) dzz"};
  const double qs[5] = {4.0, 2.0, 4.0 / 3.0, 1.0, 1.0};
  const std::vector<double>* series[5] = {&n1, &n2, &n3, &n4, &n5};
  for (int s = 0; s < 5; ++s) {
    NormReport r;
    r.name = names[s];
    r.value = time_integral(tt, *series[s], qs[s]);
    r.truncation_mass = trunc[s];
    r.converged = trunc[s] < 0.05;
    rep.summands.push_back(std::move(r));
    rep.x_total += rep.summands.back().value;
    // quadrature estimate: compare against a half-resolution trapezoid
    if (n >= 5) {
      const double coarse = time_integral(tt, *series[s], qs[s], 2);
      const double fine = rep.summands.back().value;
      if (fine > 0)
        rep.quadrature_error_estimate = std::max(
            rep.quadrature_error_estimate, std::abs(fine - coarse) / (3 * fine));
    }
  }

  // heat decay across one interval at the dealias corner
  double kmax2 = 0;
  for (int ax = 0; ax < 3; ++ax) {
    const double kx = g.k_unit(ax) * g.keep_max(ax);
    kmax2 += kx * kx;
  }
  double max_dt = 0;
  for (std::size_t i = 1; i < n; ++i)
    max_dt = std::max(max_dt, traj.times[i] - traj.times[i - 1]);
  rep.quadrature_warning = max_dt * kmax2 > std::log(2.0);

  // comparison against L1-in-time anisotropic norms of the forcing itself
  std::vector<std::array<double, 2>> abs_default;
  if (!alpha_beta) {
    for (double beta : {-delta, 0.5 * (1 / p - delta), 1 / p})
      abs_default.push_back({-1 + 3 / p - beta, beta});
    alpha_beta = &abs_default;
  }
  for (const auto& ab : *alpha_beta) {
    BesovIndex ia{p, ab[0], ab[1], 1};
    std::vector<double> nf(n);
    for (std::size_t i = 0; i < n; ++i)
      nf[i] = aniso_besov_norm(traj.snaps[i], ia).value;
    const double l1 = time_integral(tt, nf, 1.0);
    rep.l1_ratios.push_back({ab, l1 > 0 ? rep.x_total / l1 : 0});
  }
  return rep;
}

}  // namespace strata
