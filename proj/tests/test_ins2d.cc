#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>
#include <cstring>
#include <numbers>

#include "doctest.h"
#include "strata/field.h"
#include "strata/ins2d.h"
#include "strata/ops.h"

using namespace strata;
constexpr double pi = std::numbers::pi;
constexpr double inf = std::numeric_limits<double>::infinity();

namespace {

Field taylor_green(const GridPtr& g) {
  return Field::from_function(g, 2, [](int c, const std::array<double, 3>& x) {
    return c == 0 ? std::sin(x[0]) * std::cos(x[1])
                  : -std::cos(x[0]) * std::sin(x[1]);
  });
}

double rel_diff(const Field& f, const Field& g) {
  return lincomb(1, f, -1, g).l2_norm() / std::max(g.l2_norm(), 1e-300);
}

FluidState tg_state(const GridPtr& g, double a_const = 0.0) {
  FluidState s;
  s.t = 0;
  s.a = Field::zeros(g, 1);
  if (a_const != 0) s.a.spec_mut(0)[0] = a_const;
  s.u = taylor_green(g);
  s.grad_pi = Field::zeros(g, 2);
  return s;
}

}  // namespace

TEST_CASE("initial data synthesis and validation") {
  auto g = make_grid2d(128, 32 * pi);

  // co-centered radial bump pair: all moments vanish by symmetry + tuning
  VortexPairParams single;
  single.separation = 0;
  single.eta = 0.1;
  InitialSpec sp = synthesize_decay_data(g, single);
  MomentReport m = measure_initial(sp);
  CHECK(std::abs(m.profile_moment[0]) < 1e-12);
  CHECK(std::abs(m.profile_moment[1]) < 1e-12);
  for (int c = 0; c < 4; ++c) CHECK(std::abs(m.weighted[c]) < 1e-7);
  CHECK(m.div_residual < 1e-12);
  CHECK(m.rho_min > 0.85);
  CHECK(m.rho_max < 1.15);
  FluidState st = validate_initial(sp);
  CHECK(st.t == 0);
  CHECK(st.a.lp_norm(inf) < 0.12);

  // separated pair: same conclusions up to exponentially small cross terms
  VortexPairParams pair;
  pair.eta = 0.1;
  InitialSpec sp2 = synthesize_decay_data(g, pair);
  MomentReport m2 = measure_initial(sp2);
  for (int c = 0; c < 2; ++c) CHECK(std::abs(m2.profile_moment[c]) < 1e-8);
  for (int c = 0; c < 4; ++c) CHECK(std::abs(m2.weighted[c]) < 1e-6);
  CHECK_NOTHROW(validate_initial(sp2));

  // zero profile with any solenoidal velocity is accepted, a is exactly 0
  InitialSpec zp;
  zp.sigma0 = Field::zeros(g, 1);
  zp.v0 = sp2.v0;
  zp.eta = 0.3;
  FluidState st0 = validate_initial(zp);
  CHECK(st0.a.l2_norm() == 0.0);

  // density amplitude pushing rho past 5/4 is rejected
  InitialSpec hot = sp2;
  hot.eta = 1.0;
  CHECK_THROWS_AS(validate_initial(hot), std::domain_error);

  // non-solenoidal velocity is rejected
  InitialSpec skew = sp2;
  skew.v0 = Field::from_function(g, 2, [](int c, const std::array<double, 3>& x) {
    return c == 0 ? std::sin(x[0] / 16) : 0.0;
  });
  CHECK_THROWS_AS(validate_initial(skew), std::domain_error);
}

TEST_CASE("rhs: Taylor-Green identities") {
  auto g = make_grid2d(64, 2 * pi);

  // zero velocity: both tendencies vanish
  FluidState rest = tg_state(g);
  rest.u = Field::zeros(g, 2);
  Tendency t0 = rhs(rest);
  CHECK(t0.da_dt.l2_norm() == 0.0);
  CHECK(t0.du_dt.l2_norm() == 0.0);

  // a = 0: nonlinearity is a pure gradient, du/dt = -2u
  FluidState s = tg_state(g);
  Tendency td = rhs(s, 1e-12);
  CHECK(rel_diff(td.du_dt, scaled(s.u, -2.0)) < 1e-10);
  CHECK(td.da_dt.l2_norm() < 1e-13);
  CHECK(td.proj_iterations == 0);

  // constant a = c: du/dt = -2(1+c) u and grad_pi = grad(cos2x+cos2y)/(4(1+c))
  const double c = 0.3;
  FluidState sc = tg_state(g, c);
  Tendency tc = rhs(sc, 1e-12);
  CHECK(rel_diff(tc.du_dt, scaled(sc.u, -2.0 * (1 + c))) < 1e-9);
  Field gp_oracle =
      Field::from_function(g, 2, [&](int k, const std::array<double, 3>& x) {
        return -std::sin(2 * x[k]) / (2 * (1 + c));
      });
  CHECK(rel_diff(tc.grad_pi, gp_oracle) < 1e-8);
  CHECK(div(tc.du_dt).l2_norm() / tc.du_dt.l2_norm() < 1e-11);
}

TEST_CASE("step: exact decay, CFL guard, temporal order") {
  auto g = make_grid2d(64, 2 * pi);
  FluidState s = tg_state(g);

  // CFL rejection carries a usable bound
  CHECK_THROWS_AS(step(s, 1.0), std::domain_error);
  CHECK(cfl_dt(s) == doctest::Approx(0.4 * std::min(2 * pi / 64,
                                                    std::pow(2 * pi / 64, 2) / 2))
                         .epsilon(1e-12));

  // u = 0 stays put
  FluidState rest = s;
  rest.u = Field::zeros(g, 2);
  FluidState r2 = step(rest, 1e-3);
  CHECK(r2.u.l2_norm() == 0.0);
  CHECK(rel_diff(r2.a, rest.a) == 0.0);

  // Taylor-Green to t = 1 at dt = 1e-3: matches e^{-2} u0 to discretization
  RunOptions ro;
  ro.dt = 1e-3;
  Trajectory tr = run(s, 1.0, ro);
  REQUIRE(!tr.aborted);
  Field oracle = scaled(s.u, std::exp(-2.0));
  CHECK(rel_diff(tr.final_state.u, oracle) < 1e-6);

  // RK4 order on the exact exponential: halving dt shrinks the error ~16x
  auto g32 = make_grid2d(32, 2 * pi);
  FluidState s32 = tg_state(g32);
  Field ex = scaled(s32.u, std::exp(-2.0));
  RunOptions o1, o2;
  o1.dt = 4e-3;
  o2.dt = 2e-3;
  const double e1 = rel_diff(run(s32, 1.0, o1).final_state.u, ex);
  const double e2 = rel_diff(run(s32, 1.0, o2).final_state.u, ex);
  const double order = std::log2(e1 / e2);
  CHECK(order > 3.7);
  CHECK(order < 4.3);
}

TEST_CASE("integrating-factor scheme") {
  // heat part handled exactly: Taylor-Green is exact at any admissible dt
  auto g = make_grid2d(64, 2 * pi);
  FluidState s = tg_state(g);
  RunOptions ro;
  ro.dt = 0.02;  // 10x beyond the plain-RK4 diffusive bound
  ro.scheme = Scheme::IFRK4;
  CHECK(cfl_dt(s, Scheme::IFRK4) > 0.02);
  CHECK_THROWS_AS(run(s, 0.1, [] {
                    RunOptions r;
                    r.dt = 0.02;
                    return r;
                  }()),
                  std::domain_error);  // same dt is rejected for plain RK4
  Trajectory tr = run(s, 1.0, ro);
  REQUIRE(!tr.aborted);
  CHECK(rel_diff(tr.final_state.u, scaled(s.u, std::exp(-2.0))) < 1e-12);

  // agreement with plain RK4 on a variable-density flow at a shared small dt
  auto g2 = make_grid2d(64, 4 * pi);
  VortexPairParams p;
  p.eta = 0.1;
  p.psi_width = 1.0;
  p.separation = 4.0;
  p.density_width = 0.8;
  p.moment_tolerance = 1.0;
  FluidState v0 = validate_initial(synthesize_decay_data(g2, p));
  RunOptions oa, ob;
  oa.dt = 5e-4;
  oa.proj_tol = 1e-12;
  ob = oa;
  ob.scheme = Scheme::IFRK4;
  FluidState fa = run(v0, 0.1, oa).final_state;
  FluidState fb = run(v0, 0.1, ob).final_state;
  CHECK(rel_diff(fb.u, fa.u) < 1e-8);
  CHECK(rel_diff(fb.a, fa.a) < 1e-8);

  // temporal order approaches 4 once mu*dt of the stiffest retained mode
  // is small; measure below that onset
  StepOptions so;
  so.proj_tol = 1e-13;
  so.scheme = Scheme::IFRK4;
  const auto advance = [&](double dt, int n) {
    FluidState st = v0;
    for (int i = 0; i < n; ++i) st = step(st, dt, so);
    return st;
  };
  FluidState ref = advance(1.25e-4, 128);
  const double e1 = rel_diff(advance(1e-3, 16).u, ref.u);
  const double e2 = rel_diff(advance(5e-4, 32).u, ref.u);
  const double order = std::log2(e1 / e2);
  CHECK(order > 3.7);
  CHECK(order < 4.3);

  // long IF steps keep the energy balance tight (quadrature-limited)
  RunOptions lo;
  lo.scheme = Scheme::IFRK4;
  lo.series_every = 0.25;
  Trajectory lt = run(v0, 2.0, lo);
  REQUIRE(!lt.aborted);
  ConservationReport cr = conservation_report(lt);
  CHECK(cr.energy_balance_drift < 1e-4);
  CHECK(cr.max_div_residual < 1e-8);
}

TEST_CASE("scaling equivariance of the discrete system") {
  // (rho0(2x), 2u0(2x)) on the half box for T/4 matches the original to
  // rounding: every scale factor is a power of two
  auto g1 = make_grid2d(64, 4 * pi);
  auto g2 = make_grid2d(64, 2 * pi);

  VortexPairParams p;
  p.eta = 0.1;
  p.psi_width = 1.0;
  p.separation = 4.0;
  p.density_width = 0.8;
  p.moment_tolerance = 1.0;  // moments are irrelevant here
  InitialSpec sp = synthesize_decay_data(g1, p);
  FluidState s1 = validate_initial(sp);

  FluidState s2;
  s2.t = 0;
  s2.a = Field(g2, 1);
  s2.u = Field(g2, 2);
  std::memcpy(s2.a.phys_raw(0), s1.a.phys(0),
              g1->npoints() * sizeof(double));
  for (int c = 0; c < 2; ++c) {
    double* dst = s2.u.phys_raw(c);
    const double* src = s1.u.phys(c);
    for (std::size_t i = 0; i < g1->npoints(); ++i) dst[i] = 2 * src[i];
  }
  s2.grad_pi = Field::zeros(g2, 2);

  RunOptions o1, o2;
  o1.dt = 2e-3;
  o1.proj_tol = 1e-12;
  o2.dt = o1.dt / 4;
  o2.proj_tol = 1e-12;
  FluidState f1 = run(std::move(s1), 0.2, o1).final_state;
  FluidState f2 = run(std::move(s2), 0.05, o2).final_state;

  Field expect_u = scaled(f1.u, 2.0);
  double num = 0, den = 0;
  for (int c = 0; c < 2; ++c) {
    const std::complex<double>* a = f2.u.spec(c);
    const std::complex<double>* b = expect_u.spec(c);
    for (std::size_t i = 0; i < g2->nspec(); ++i) {
      num += std::norm(a[i] - b[i]);
      den += std::norm(b[i]);
    }
  }
  CHECK(std::sqrt(num / den) < 1e-12);
  CHECK(rel_diff(f2.a, f1.a) < 1e-12);
}

TEST_CASE("conservation and energy ledger on a variable-density run") {
  auto g = make_grid2d(128, 8 * pi);
  VortexPairParams p;
  p.eta = 0.1;
  p.psi_width = 1.0;
  p.separation = 10.0;
  p.density_width = 0.8;
  p.moment_tolerance = 1e-3;
  FluidState s = validate_initial(synthesize_decay_data(g, p));

  RunOptions ro;
  ro.proj_tol = 1e-10;
  ro.series_every = 0.05;
  Trajectory tr = run(std::move(s), 0.5, ro);
  REQUIRE(!tr.aborted);

  ConservationReport cr = conservation_report(tr);
  CHECK(cr.energy_balance_drift < 1e-6);
  CHECK(cr.varrho_drift_l2 < 1e-8);
  CHECK(cr.varrho_drift_l4 < 1e-7);
  CHECK(cr.rho_excursion < 1e-3);
  CHECK(cr.max_div_residual < 1e-8);

  EnergyLedger led = energy_ledger(tr);
  for (std::size_t i = 0; i < led.t.size(); ++i) {
    CHECK(led.E2[i] >= led.E1[i] * led.E1[i]);
    CHECK(led.E0[i] >= 0);
    CHECK(led.E3[i] >= 0);
  }
  // energy monotone nonincreasing
  for (std::size_t i = 1; i < led.E0.size(); ++i)
    CHECK(led.E0[i] <= led.E0[i - 1] + 1e-10);

  // threshold chain recomputed from the stored initial snapshot
  const Snapshot& s0 = tr.snaps.front();
  const Grid& gg = s0.u.grid();
  double U0 = 0, E0 = 0, vr2 = 0;
  const double dv = gg.volume() / gg.npoints();
  const int n0 = gg.npts(0), n1 = gg.npts(1);
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < n1; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * n1 + j;
      const double y0 = i * gg.len(0) / n0 - gg.len(0) / 2;
      const double y1 = j * gg.len(1) / n1 - gg.len(1) / 2;
      const double sp = std::hypot(s0.u.phys(0)[idx], s0.u.phys(1)[idx]);
      const double rho = 1.0 / (1.0 + s0.a.phys(0)[idx]);
      U0 += std::hypot(y0, y1) * sp * dv;
      E0 += rho * sp * sp * dv;
      vr2 += (rho - 1) * (rho - 1) * dv;
    }
  CHECK(led.U0 == doctest::Approx(U0).epsilon(1e-12));
  CHECK(led.T0 == doctest::Approx(std::max(U0 / E0, vr2)).epsilon(1e-10));
  CHECK(led.T1 >= led.T0);
  CHECK(led.T2 >= led.T1);
  CHECK(led.T3 >= led.T2);
}

TEST_CASE("trajectory basics: T = 0, determinism") {
  auto g = make_grid2d(32, 2 * pi);
  FluidState s = tg_state(g, 0.0);
  Trajectory t0 = run(s, 0.0);
  CHECK(t0.snaps.size() == 1);
  CHECK(t0.series.size() == 1);
  CHECK(t0.snaps[0].t == 0.0);

  RunOptions ro;
  ro.dt = 1e-3;
  Trajectory a = run(s, 0.05, ro);
  Trajectory b = run(s, 0.05, ro);
  CHECK(std::memcmp(a.final_state.u.spec(0), b.final_state.u.spec(0),
                    g->nspec() * sizeof(std::complex<double>)) == 0);
  CHECK(std::memcmp(a.final_state.u.spec(1), b.final_state.u.spec(1),
                    g->nspec() * sizeof(std::complex<double>)) == 0);
}

TEST_CASE("energy functional decay on Taylor-Green") {
  auto g = make_grid2d(32, 2 * pi);
  FluidState s = tg_state(g);
  RunOptions ro;
  ro.dt = 2e-3;
  ro.series_every = 0.1;
  Trajectory tr = run(std::move(s), 0.5, ro);
  EnergyLedger led = energy_ledger(tr);
  const double ratio = led.E0.back() / led.E0.front();
  CHECK(ratio == doctest::Approx(std::exp(-4.0 * 0.5)).epsilon(1e-6));
}

TEST_CASE("mild-formulation residual") {
  auto g = make_grid2d(64, 2 * pi);

  // near-Stokes single-mode flow: residual at the amplitude scale
  FluidState tiny = tg_state(g);
  tiny.u = scaled(tiny.u, 1e-6);
  RunOptions rt;
  rt.dt = 1e-3;
  rt.snapshot_every = 0.02;
  Trajectory trs = run(std::move(tiny), 1.0, rt);
  DuhamelReport dr = duhamel_residual(trs);
  CHECK(dr.max_rel_residual < 1e-5);

  // nonlinear constant-density run: classical mild formulation
  auto g2 = make_grid2d(128, 8 * pi);
  VortexPairParams p;
  p.eta = 0.0;
  p.psi_width = 1.0;
  p.separation = 10.0;
  p.density_width = 0.8;
  p.moment_tolerance = 1e-3;
  FluidState s = validate_initial(synthesize_decay_data(g2, p));
  RunOptions ro;
  ro.snapshot_every = 0.01;
  Trajectory tr = run(std::move(s), 2.0, ro);
  REQUIRE(tr.snaps.size() >= 200);
  DuhamelReport dn = duhamel_residual(tr);
  CHECK(dn.max_rel_residual < 1e-3);
  CHECK(!dn.warned);

  // variable-density run: the full reformulation
  VortexPairParams pv = p;
  pv.eta = 0.1;
  FluidState sv = validate_initial(synthesize_decay_data(g2, pv));
  Trajectory trv = run(std::move(sv), 2.0, ro);
  DuhamelReport dv = duhamel_residual(trv);
  CHECK(dv.max_rel_residual < 1e-3);
}

TEST_CASE("time-adapted low-frequency split") {
  auto g = make_grid2d(32, 2 * pi);
  FluidState s = tg_state(g);

  // radius oracle sqrt(2/e) ~ 0.858: no nonzero integer mode below it
  const double r0 = split_cutoff_radius(0.0, 1.0, GProfile::PowerAlpha, 1.0);
  CHECK(r0 == doctest::Approx(std::sqrt(2.0 / std::numbers::e)).epsilon(1e-12));
  SplitEnergy se = low_frequency_split(s, 1.0, GProfile::PowerAlpha, 1.0);
  CHECK(se.low < 1e-30);  // only FFT roundoff sits below the cutoff
  const double total = s.u.l2_norm();
  CHECK(se.low + se.high == doctest::Approx(total * total).epsilon(1e-12));

  // cutoff shrinks in time: low part nonincreasing for a frozen state
  FluidState frozen = s;
  double prev_low = inf;
  for (double t : {0.0, 1.0, 5.0, 20.0}) {
    frozen.t = t;
    SplitEnergy sp = low_frequency_split(frozen, 1.0, GProfile::PowerAlpha, 3.0);
    CHECK(sp.low <= prev_low + 1e-15);
    prev_low = sp.low;
    CHECK(sp.low + sp.high == doctest::Approx(total * total).epsilon(1e-12));
  }

  // the log profile cuts below the power profile at matched alpha = 3
  const double rp = split_cutoff_radius(4.0, 1.0, GProfile::PowerAlpha, 3.0);
  const double rl = split_cutoff_radius(4.0, 1.0, GProfile::LogProfile);
  CHECK(rl < rp);
}
