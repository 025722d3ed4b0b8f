#pragma once

#include <functional>
#include <string>
#include <vector>

#include "strata/ins2d.h"

namespace strata {

enum class LogCorrection { None, Log, SqrtLog };

// one measured norm along a trajectory; times strictly increasing,
// values nonnegative. log_correction declares the expected form
// value ~ <t>^sigma * (log<t>)^q with q in {0, 1, 1/2}.
struct NormSeries {
  std::string name;
  std::vector<std::pair<double, double>> samples;
  LogCorrection log_correction = LogCorrection::None;
};

struct DecayFit {
  double exponent = 0;
  double confidence_halfwidth = 0;  // 1.96 * stderr of the slope
  double t_lo = 0, t_hi = 0;        // window actually used
  double r_squared = 0;
  double saturation_time = 0;  // box-feel estimate supplied by the caller
};

// Least squares of log(value / correction(<t>)) against log<t> with
// <t> = e + t. The window is clipped at saturation_time before fitting,
// so t_hi < saturation_time holds structurally. Throws std::domain_error
// on nonpositive values and std::invalid_argument when fewer than 10
// samples land in the window.
DecayFit fit_power_law(const NormSeries& series, double t_lo, double t_hi,
                       double saturation_time = 1e300);

// fits with r_squared below this are not power laws (an exponential tail
// in any wide window lands far below it)
inline constexpr double kR2Gate = 0.99;

struct Campaign {
  std::vector<NormSeries> series;  // the nine tracked norms
  double saturation_time = 0;
  EnergyLedger ledger;
  ConservationReport conservation;
  bool aborted = false;
  std::string abort_reason;
};

struct CampaignOptions {
  double T = 60;
  double series_every = 0.25;
  double dt = 0;  // 0: adaptive
  double proj_tol = 1e-8;
  Scheme scheme = Scheme::IFRK4;  // long horizons need the exact heat factor
  GProfile profile = GProfile::PowerAlpha;
  double alpha = 3.0;
  double snapshot_every = 0;  // campaigns rarely need field snapshots
};

// Runs the solver on validated, box-centered data and records
//   u_sq       ||u||_L2^2          grad_u     ||grad u||_L2
//   u_inf      ||u||_Linf          u_t        ||du/dt||_L2
//   grad2_u    ||grad^2 u||_L2     grad_pi    ||grad Pi||_L2
//   grad_u_t   ||grad du/dt||_L2   grad3_u    ||grad^3 u||_L2   [log]
//   grad_u_inf ||grad u||_Linf                                  [sqrt_log]
// saturation_time is where the shrinking low-frequency cutoff falls below
// the first nonzero box wavenumber. Throws std::domain_error when the
// data is not localized (boundary tail above 1e-6 of peak).
Campaign decay_campaign(const InitialSpec& spec, const CampaignOptions& opts = {});

// time at which split_cutoff_radius(t, 1, profile, alpha) crosses k1
double campaign_saturation_time(const Grid& g, GProfile profile, double alpha);

// pointwise sup of |grad u| (Frobenius over components and axes)
double grad_sup_norm(const Field& u);

struct TableRow {
  std::string name;
  double target = 0;
  LogCorrection correction = LogCorrection::None;
  int derivative_order = 0;
  bool tested = false;
  bool resolution_limited = false;  // high-order row that missed the gate
  bool pass = false;
  DecayFit fit;
};

struct ExponentTable {
  std::vector<TableRow> rows;
  double t_lo = 0, t_hi = 0;
  double tolerance = 0;
  bool all_pass = false;  // over tested rows that are not flagged
  // threshold times from the campaign ledger; a warning is recorded when
  // the fit window opens before the chain is established
  double T0 = 0, T3 = 0;
  bool window_before_thresholds = false;
};

// Fits every series of the campaign inside [t_lo, min(t_hi, saturation)]
// and compares to the sharp-rate table. Low-order rows must match within
// the tolerance; rows with two or more derivatives that miss are flagged
// resolution_limited instead of failed. Missing series stay untested.
ExponentTable exponent_table_check(const Campaign& c, double t_lo = 5,
                                   double t_hi = 50, double tolerance = 0.3);

// 4th-order centered periodic finite difference across a ring of fields
// (the z lattice); order is 1 or 2. ring[i] must share one grid.
Field fd4_z(const std::vector<const Field*>& ring, int i, double dz,
            int order);

struct SliceFamily;  // slowvar.h

struct SliceCheckRow {
  std::string name;
  double target = 0;
  std::vector<double> slice_exponents;  // per z, NaN where the series is 0
  double mean_exponent = 0;
  bool zero_at_truncation = false;  // whole row vanished (z-independent)
  bool tested = false;
  bool pass = false;
};

struct SliceCheckReport {
  std::vector<SliceCheckRow> rows;
  double t_lo = 0, t_hi = 0;
  // per-slice amplitude of ||v_z||^2 at the first window sample: the
  // z-profile the sharp rates modulate
  std::vector<double> vz_profile;
  bool all_pass = false;
};

// Forms v_z and v_zz by 4th-order differences across the slice lattice at
// every stored snapshot time, measures L2 / grad / time-derivative norms
// per slice, and fits the same sharp-rate table slice by slice. Needs at
// least 5 slices on one grid; mismatched grids throw.
SliceCheckReport z_derivative_decay_check(const SliceFamily& family,
                                          double t_lo, double t_hi,
                                          double tolerance = 0.4);

}  // namespace strata
