#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "strata/decay.h"
#include "strata/slowvar.h"

using namespace strata;

namespace {

constexpr double kE = std::numbers::e;

NormSeries sampled(const char* name, double t0, double t1, double dt,
                   const std::function<double(double)>& fn,
                   LogCorrection corr = LogCorrection::None) {
  NormSeries s;
  s.name = name;
  s.log_correction = corr;
  for (double t = t0; t <= t1 + 1e-9; t += dt) s.samples.emplace_back(t, fn(t));
  return s;
}

double bracket(double t) { return kE + t; }

}  // namespace

TEST_CASE("power-law fitting recovers declared forms") {
  // exact <t>^-2: slope, window endpoints and r^2 are all determined
  auto pure = sampled("pure", 0, 40, 0.25,
                      [](double t) { return std::pow(bracket(t), -2.0); });
  DecayFit f = fit_power_law(pure, 2, 40);
  CHECK(f.exponent == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK(f.confidence_halfwidth < 1e-10);
  CHECK(f.r_squared > 0.999999);
  CHECK(f.t_lo == doctest::Approx(2.0));
  CHECK(f.t_hi == doctest::Approx(40.0));

  // declared log factors divide out exactly
  auto logc = sampled(
      "logc", 0, 40, 0.25,
      [](double t) { return std::pow(bracket(t), -2.5) * std::log(bracket(t)); },
      LogCorrection::Log);
  CHECK(fit_power_law(logc, 2, 40).exponent ==
        doctest::Approx(-2.5).epsilon(1e-9));
  auto sqlc = sampled(
      "sqlc", 0, 40, 0.25,
      [](double t) {
        return std::pow(bracket(t), -1.5) * std::sqrt(std::log(bracket(t)));
      },
      LogCorrection::SqrtLog);
  CHECK(fit_power_law(sqlc, 2, 40).exponent ==
        doctest::Approx(-1.5).epsilon(1e-9));

  // a gentle multiplicative wobble moves the slope by less than the
  // reported confidence scale
  auto noisy = sampled("noisy", 0, 40, 0.25, [](double t) {
    return std::pow(bracket(t), -2.0) * std::exp(0.02 * std::sin(7 * t));
  });
  DecayFit fn = fit_power_law(noisy, 2, 40);
  CHECK(std::abs(fn.exponent + 2.0) < 0.01);
  CHECK(fn.confidence_halfwidth < 0.01);
  CHECK(fn.r_squared > 0.999);

  // an exponential tail is not a power law: the r^2 gate separates it
  auto expo = sampled("expo", 0, 40, 0.25,
                      [](double t) { return std::exp(-4 * t); });
  DecayFit fe = fit_power_law(expo, 2, 40);
  CHECK(fe.r_squared < kR2Gate);
  CHECK(fn.r_squared > kR2Gate);

  // saturation clips the window before the fit sees it
  DecayFit fs = fit_power_law(pure, 2, 40, 20.0);
  CHECK(fs.t_hi <= 20.0);
  CHECK(fs.saturation_time == doctest::Approx(20.0));
  CHECK(fs.exponent == doctest::Approx(-2.0).epsilon(1e-9));
}

TEST_CASE("fitting preconditions") {
  auto thin = sampled("thin", 0, 2, 0.25,
                      [](double t) { return std::pow(bracket(t), -2.0); });
  CHECK_THROWS_AS((void)fit_power_law(thin, 0, 2.01), std::invalid_argument);

  NormSeries bad = sampled("bad", 0, 20, 0.5,
                           [](double t) { return std::pow(bracket(t), -2.0); });
  bad.samples[10].second = 0.0;
  CHECK_THROWS_AS((void)fit_power_law(bad, 0, 20), std::domain_error);
}

TEST_CASE("saturation of the shrinking cutoff") {
  // power profile: radius^2(t) = 2 alpha / <t> crosses k1^2 at 2 alpha / k1^2 - e
  auto g16 = make_grid2d(32, 16 * std::numbers::pi);
  auto g32 = make_grid2d(32, 32 * std::numbers::pi);
  const double k16 = 2 * std::numbers::pi / (16 * std::numbers::pi);
  const double t16 = campaign_saturation_time(*g16, GProfile::PowerAlpha, 3.0);
  const double t32 = campaign_saturation_time(*g32, GProfile::PowerAlpha, 3.0);
  CHECK(t16 == doctest::Approx(2 * 3.0 / (k16 * k16) - kE).epsilon(1e-10));
  // doubling the box quadruples the pre-saturation span (up to the e shift)
  CHECK(t32 / t16 > 3.0);
  CHECK(t32 / t16 < 5.0);

  // log profile has no closed form here; the bisection must sit on the curve
  const double tl = campaign_saturation_time(*g16, GProfile::LogProfile, 3.0);
  CHECK(split_cutoff_radius(tl, 1.0, GProfile::LogProfile, 3.0) ==
        doctest::Approx(k16).epsilon(1e-9));

  // cutoff already below k1 at t = 0
  auto gsmall = make_grid2d(32, 2 * std::numbers::pi);
  CHECK(campaign_saturation_time(*gsmall, GProfile::PowerAlpha, 0.1) == 0.0);
}

TEST_CASE("gradient sup norm") {
  auto g = make_grid2d(64, 2 * std::numbers::pi);
  Field u = Field::from_function(g, 2, [](int c, const std::array<double, 3>& x) {
    return c == 0 ? std::sin(x[0]) * std::cos(x[1])
                  : -std::cos(x[0]) * std::sin(x[1]);
  });
  // Frobenius magnitude 2 cos^2 x cos^2 y + 2 sin^2 x sin^2 y peaks at sqrt(2)
  CHECK(grad_sup_norm(u) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-10));
}

TEST_CASE("campaign structure, pilot bands, resolution invariance") {
  const double box = 20 * std::numbers::pi;
  VortexPairParams pp;  // defaults fit this box with ~1e-9 edge tails
  CampaignOptions co;
  co.T = 10;
  co.series_every = 0.25;
  co.proj_tol = 1e-8;

  auto g128 = make_grid2d(128, box);
  Campaign c = decay_campaign(synthesize_decay_data(g128, pp), co);

  REQUIRE(!c.aborted);
  REQUIRE(c.series.size() == 9);
  const char* names[9] = {"u_sq",    "grad_u",    "u_inf",
                          "u_t",     "grad2_u",   "grad_pi",
                          "grad_u_t", "grad3_u",  "grad_u_inf"};
  for (int i = 0; i < 9; ++i) {
    CHECK(c.series[i].name == names[i]);
    REQUIRE(c.series[i].samples.size() == 41);  // 0, 0.25, ..., 10
    for (std::size_t j = 0; j < c.series[i].samples.size(); ++j) {
      CHECK(c.series[i].samples[j].second > 0);
      if (j) CHECK(c.series[i].samples[j].first >
                   c.series[i].samples[j - 1].first);
    }
  }
  CHECK(c.series[7].log_correction == LogCorrection::Log);
  CHECK(c.series[8].log_correction == LogCorrection::SqrtLog);

  // kinetic energy decays monotonically for this data
  for (std::size_t j = 1; j < c.series[0].samples.size(); ++j)
    CHECK(c.series[0].samples[j].second < c.series[0].samples[j - 1].second);

  const double k1 = 2 * std::numbers::pi / box;
  CHECK(c.saturation_time ==
        doctest::Approx(2 * 3.0 / (k1 * k1) - kE).epsilon(1e-10));
  CHECK(c.ledger.T0 <= c.ledger.T1);
  CHECK(c.ledger.T1 <= c.ledger.T2);
  CHECK(c.ledger.T2 <= c.ledger.T3);
  CHECK(c.conservation.max_div_residual < 1e-7);
  CHECK(c.conservation.energy_balance_drift < 1e-2);
  CHECK(c.conservation.rho_excursion < 1e-2);

  // the t = 0 sup of the velocity gradient, recomputed independently
  Field u0 = synthesize_decay_data(g128, pp).v0;
  CHECK(c.series[8].samples[0].second ==
        doctest::Approx(grad_sup_norm(u0)).epsilon(1e-12));

  // observed band for the early-window energy slope on this data; the
  // sharp-rate window lives much later and is exercised by the big campaign
  NormSeries u_sq = c.series[0];
  DecayFit f128 = fit_power_law(u_sq, 2, 10, c.saturation_time);
  MESSAGE("pilot u_sq slope ", f128.exponent, " r2 ", f128.r_squared);
  CHECK(f128.exponent > -2.6);
  CHECK(f128.exponent < -1.4);
  CHECK(f128.r_squared > 0.99);

  // the low-order slope is grid-converged: halving resolution moves it
  // by less than the fit confidence scale
  auto g64 = make_grid2d(64, box);
  Campaign c64 = decay_campaign(synthesize_decay_data(g64, pp), co);
  REQUIRE(!c64.aborted);
  DecayFit f64 = fit_power_law(c64.series[0], 2, 10, c64.saturation_time);
  MESSAGE("64^2 u_sq slope ", f64.exponent);
  CHECK(std::abs(f64.exponent - f128.exponent) < 0.05);

  // table check on the pilot: low-order rows must already be power-like
  ExponentTable tb = exponent_table_check(c, 2, 10, 0.6);
  REQUIRE(tb.rows.size() == 9);
  for (const TableRow& r : tb.rows) {
    CHECK(r.tested);
    MESSAGE(r.name, " slope ", r.fit.exponent, " target ", r.target, " r2 ",
            r.fit.r_squared);
  }
  CHECK(tb.t_hi == doctest::Approx(10.0));
  MESSAGE("thresholds T0 ", tb.T0, " T3 ", tb.T3);
  CHECK(tb.window_before_thresholds == (2.0 < c.ledger.T3));
}

TEST_CASE("exponent table verdicts on synthetic series") {
  struct Row {
    const char* name;
    double target;
    LogCorrection corr;
  };
  const Row rows[9] = {
      {"u_sq", -2.0, LogCorrection::None},
      {"grad_u", -1.5, LogCorrection::None},
      {"u_inf", -1.5, LogCorrection::None},
      {"u_t", -2.0, LogCorrection::None},
      {"grad2_u", -2.0, LogCorrection::None},
      {"grad_pi", -2.0, LogCorrection::None},
      {"grad_u_t", -2.5, LogCorrection::None},
      {"grad3_u", -2.5, LogCorrection::Log},
      {"grad_u_inf", -2.0, LogCorrection::SqrtLog},
  };
  auto make = [&](int i, double slope) {
    return sampled(rows[i].name, 0, 60, 0.5,
                   [&, slope](double t) {
                     double v = std::pow(bracket(t), slope);
                     if (rows[i].corr == LogCorrection::Log)
                       v *= std::log(bracket(t));
                     else if (rows[i].corr == LogCorrection::SqrtLog)
                       v *= std::sqrt(std::log(bracket(t)));
                     return v;
                   },
                   rows[i].corr);
  };
  Campaign c;
  c.saturation_time = 1e9;
  c.ledger.T0 = 1;
  c.ledger.T3 = 3;
  for (int i = 0; i < 9; ++i) c.series.push_back(make(i, rows[i].target));

  ExponentTable tb = exponent_table_check(c);  // default [5, 50], 0.3
  REQUIRE(tb.rows.size() == 9);
  CHECK(tb.all_pass);
  CHECK(!tb.window_before_thresholds);
  for (int i = 0; i < 9; ++i) {
    CHECK(tb.rows[i].tested);
    CHECK(tb.rows[i].pass);
    CHECK(!tb.rows[i].resolution_limited);
    CHECK(tb.rows[i].fit.exponent ==
          doctest::Approx(rows[i].target).epsilon(1e-6));
  }

  // missing series: untested, not failed
  Campaign cm = c;
  cm.series.erase(cm.series.begin() + 5);  // grad_pi
  ExponentTable tbm = exponent_table_check(cm);
  CHECK(!tbm.rows[5].tested);
  CHECK(tbm.all_pass);

  // an all-zero series is equally untested
  Campaign cz = c;
  for (auto& s : cz.series[2].samples) s.second = 0;
  CHECK(!exponent_table_check(cz).rows[2].tested);

  // a high-order row off target is flagged, not failed
  Campaign cf = c;
  cf.series[7] = make(7, -3.0);
  ExponentTable tbf = exponent_table_check(cf);
  CHECK(tbf.rows[7].tested);
  CHECK(!tbf.rows[7].pass);
  CHECK(tbf.rows[7].resolution_limited);
  CHECK(tbf.all_pass);

  // a low-order row off target fails the table
  Campaign cl = c;
  cl.series[0] = make(0, -2.5);
  ExponentTable tbl = exponent_table_check(cl);
  CHECK(!tbl.rows[0].pass);
  CHECK(!tbl.rows[0].resolution_limited);
  CHECK(!tbl.all_pass);

  // an exponential tail fails through the r^2 gate even if the slope lands
  Campaign ce = c;
  ce.series[0] = sampled("u_sq", 0, 60, 0.5,
                         [](double t) { return std::exp(-0.5 * t); });
  ExponentTable tbe = exponent_table_check(ce);
  CHECK(tbe.rows[0].fit.r_squared < kR2Gate);
  CHECK(!tbe.rows[0].pass);
  CHECK(!tbe.all_pass);

  // saturation clips the table window
  Campaign cs = c;
  cs.saturation_time = 30;
  ExponentTable tbs = exponent_table_check(cs);
  CHECK(tbs.t_hi == doctest::Approx(30.0));
  CHECK(tbs.rows[0].fit.t_hi <= 30.0);
  CHECK(tbs.all_pass);

  // late thresholds raise the window warning
  Campaign cw = c;
  cw.ledger.T3 = 7;
  CHECK(exponent_table_check(cw).window_before_thresholds);
}

TEST_CASE("z stencils converge at fourth order") {
  auto g = make_grid2d(32, 2 * std::numbers::pi);
  Field base = random_field(g, 2, 77, 3.0);
  const double nrm = base.l2_norm();

  auto ring_err = [&](int n, int order) {
    std::vector<Field> ring;
    ring.reserve(n);
    for (int i = 0; i < n; ++i)
      ring.push_back(scaled(base, std::sin(2 * std::numbers::pi * i / n)));
    std::vector<const Field*> ptrs;
    for (const Field& f : ring) ptrs.push_back(&f);
    const double dz = 2 * std::numbers::pi / n;
    double worst = 0;
    for (int i = 0; i < n; ++i) {
      const double z = 2 * std::numbers::pi * i / n;
      const double coef = order == 1 ? std::cos(z) : -std::sin(z);
      Field err = lincomb(1, fd4_z(ptrs, i, dz, order), -coef, base);
      worst = std::max(worst, err.l2_norm() / nrm);
    }
    return worst;
  };
  // frequency-1 data: the stencil symbol gives the exact error ratios
  const double r1 = ring_err(8, 1) / ring_err(16, 1);
  const double r2 = ring_err(8, 2) / ring_err(16, 2);
  CHECK(r1 > 13);
  CHECK(r1 < 19);
  CHECK(r2 > 13);
  CHECK(r2 < 19);

  std::vector<const Field*> tiny(4, &base);
  CHECK_THROWS_AS((void)fd4_z(tiny, 0, 0.1, 1), std::invalid_argument);
  std::vector<const Field*> five(5, &base);
  CHECK_THROWS_AS((void)fd4_z(five, 0, 0.1, 3), std::invalid_argument);
  CHECK_THROWS_AS((void)fd4_z(five, 0, -0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)fd4_z(five, 5, 0.1, 1), std::invalid_argument);
}

TEST_CASE("slice family construction and preconditions") {
  const double box = 16 * std::numbers::pi;
  auto g = make_grid2d(64, box);
  VortexPairParams pp;
  auto flat = [&](double) { return synthesize_decay_data(g, pp); };

  RunOptions ro;
  ro.snapshot_every = 0.5;
  ro.proj_tol = 1e-8;
  ro.scheme = Scheme::IFRK4;

  CHECK_THROWS_AS((void)solve_slice_family(flat, 4, 2 * std::numbers::pi, 0.5, ro),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)solve_slice_family(flat, 5, -1.0, 0.5, ro),
                  std::invalid_argument);
  RunOptions nosnap = ro;
  nosnap.snapshot_every = 0;
  CHECK_THROWS_AS((void)solve_slice_family(flat, 5, 2 * std::numbers::pi, 0.5, nosnap),
                  std::invalid_argument);

  // a slice rejected by validation names its index
  VortexPairParams heavy = pp;
  heavy.eta = 0.9;
  auto bad = [&](double) { return synthesize_decay_data(g, heavy); };
  CHECK_THROWS_WITH_AS(
      (void)solve_slice_family(bad, 5, 2 * std::numbers::pi, 0.5, ro),
      doctest::Contains("slice 0"), std::domain_error);

  // eta must be common
  auto vary_eta = [&](double z) {
    InitialSpec s = synthesize_decay_data(g, pp);
    if (z > 0) s.eta = pp.eta + 0.01;
    return s;
  };
  CHECK_THROWS_AS(
      (void)solve_slice_family(vary_eta, 5, 2 * std::numbers::pi, 0.5, ro),
      std::invalid_argument);

  // grids must be common (both resolutions validate on their own)
  auto g128 = make_grid2d(128, box);
  auto vary_grid = [&](double z) {
    return synthesize_decay_data(z > 0 ? g128 : g, pp);
  };
  CHECK_THROWS_AS(
      (void)solve_slice_family(vary_grid, 5, 2 * std::numbers::pi, 0.5, ro),
      std::invalid_argument);

  SliceFamily fam = solve_slice_family(flat, 5, 4.0, 0.5, ro);
  CHECK(fam.slices.size() == 5);
  CHECK(fam.z_len == 4.0);
  CHECK(fam.z[3] == doctest::Approx(4.0 * 3 / 5));
  CHECK(fam.eta == doctest::Approx(pp.eta));
  for (const Trajectory& tr : fam.slices) {
    CHECK(!tr.aborted);
    CHECK(tr.snaps.size() == 2);  // 0 and 0.5
  }
}

TEST_CASE("z-independent family vanishes at truncation") {
  auto g = make_grid2d(64, 16 * std::numbers::pi);
  VortexPairParams pp;
  auto flat = [&](double) { return synthesize_decay_data(g, pp); };

  RunOptions ro;
  ro.snapshot_every = 0.15;
  ro.proj_tol = 1e-8;
  ro.scheme = Scheme::IFRK4;
  SliceFamily fam = solve_slice_family(flat, 5, 2 * std::numbers::pi, 2.0, ro);

  SliceCheckReport rep = z_derivative_decay_check(fam, 0.2, 2.0);
  REQUIRE(rep.rows.size() == 6);
  for (const SliceCheckRow& r : rep.rows) {
    CHECK(r.zero_at_truncation);
    CHECK(!r.tested);
    CHECK(r.pass);
  }
  CHECK(rep.all_pass);
  for (double p : rep.vz_profile) CHECK(p < 1e-20);
}

TEST_CASE("modulated family produces finite slow derivatives") {
  auto g = make_grid2d(64, 16 * std::numbers::pi);
  VortexPairParams pp;
  // amplitude slowly modulated in z; moments stay zero slice by slice.
  // The phase keeps both sin and cos away from zero on the 9-point lattice,
  // so every slice carries a slow derivative visibly above roundoff.
  auto wave = [&](double z) {
    VortexPairParams q = pp;
    q.amplitude = 1.0 + 0.3 * std::sin(z + 0.3);
    return synthesize_decay_data(g, q);
  };

  RunOptions ro;
  ro.snapshot_every = 0.15;
  ro.proj_tol = 1e-8;
  ro.scheme = Scheme::IFRK4;
  const int n = 9;
  SliceFamily fam = solve_slice_family(wave, n, 2 * std::numbers::pi, 2.0, ro);

  SliceCheckReport rep = z_derivative_decay_check(fam, 0.2, 2.0);
  REQUIRE(rep.rows.size() == 6);
  for (const SliceCheckRow& r : rep.rows) {
    CHECK(r.tested);
    CHECK(!r.zero_at_truncation);
    REQUIRE(r.slice_exponents.size() == n);
    for (double e : r.slice_exponents) CHECK(std::isfinite(e));
    MESSAGE(r.name, " mean slope ", r.mean_exponent);
  }
  // d/dz amplitude = 0.3 cos(z + 0.3): the profile of ||v_z||^2 across
  // slices follows cos^2 up to the slices' nonlinear shape drift
  const auto& p = rep.vz_profile;
  REQUIRE(p.size() == n);
  int argmax = 0, cargmax = 0;
  std::vector<double> c2s(n);
  for (int i = 0; i < n; ++i) {
    const double ci = std::cos(fam.z[i] + 0.3);
    c2s[i] = ci * ci;
    if (p[i] > p[argmax]) argmax = i;
    if (c2s[i] > c2s[cargmax]) cargmax = i;
  }
  CHECK(argmax == cargmax);
  const double expect = c2s[2] / c2s[0];
  CHECK(p[2] / p[0] > 0.2 * expect);
  CHECK(p[2] / p[0] < 5.0 * expect);
}

TEST_CASE("campaign rejects delocalized data") {
  auto g = make_grid2d(64, 2 * std::numbers::pi);
  InitialSpec tg;
  tg.eta = 0;
  tg.sigma0 = Field::zeros(g, 1);
  tg.v0 = Field::from_function(g, 2, [](int c, const std::array<double, 3>& x) {
    return c == 0 ? std::sin(x[0]) * std::cos(x[1])
                  : -std::cos(x[0]) * std::sin(x[1]);
  });
  CHECK_THROWS_WITH_AS((void)decay_campaign(tg), doctest::Contains("edge"),
                       std::domain_error);
}
