#pragma once

#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "strata/decay.h"
#include "strata/ins2d.h"

namespace strata {

// One 2D trajectory per point of a periodic vertical lattice. When the 3D
// data varies slowly in x3, the leading profile solves the 2D system slice
// by slice with x3 frozen; differencing the family in z recovers the slow
// derivatives without ever discretizing a 3D operator.
struct SliceFamily {
  GridPtr grid;  // common horizontal grid
  double z_len = 2 * std::numbers::pi;
  std::vector<double> z;  // lattice values, z[i] = i * z_len / n
  std::vector<Trajectory> slices;
  double eta = 0;
};

// Runs the 2D solver once per slice. make_slice(z) supplies the initial
// data; every slice must share one grid and one eta, and all slices are
// validated before the first run starts (a rejected slice reports its
// index). opts.snapshot_every must be positive: the family exists to be
// differenced in z at stored times, so snapshots are the product.
SliceFamily solve_slice_family(
    const std::function<InitialSpec(double z)>& make_slice, int nslices,
    double z_len, double T, const RunOptions& opts);

// ---- slow-variable slabs ------------------------------------------------
//
// A slab is a 3D field whose vertical axis is the slice lattice itself:
// level i holds slice i, the vertical box is z_len. Vertical spectral
// operators on a slab differentiate across slices. Slab construction needs
// a power-of-two slice count.

Field stack_slices(const std::vector<const Field*>& slices, double z_len);

// level i of a slab, back on the matching 2D grid
Field slab_level(const Field& slab, int i);

// Per-slice pressure decomposition at one stored time, stacked into slabs.
// pi_L is sourced by the time derivative of (rho - 1) v, pi_Q by the
// double divergence of rho v (x) v; both are mean-free, and the gradient of
// their sum reconstructs the projection gradient the slice solver actually
// used (reported as a relative residual). The per-slice states this visits
// (v, its tendency v_t, a, (rho-1) v, grad_pi) ride along as slabs because
// every later assembly stage consumes them.
struct PressureSplit {
  double t = 0;
  GridPtr slab;
  Field pi_L, pi_Q;  // rank 1
  Field v, v_t;      // rank 2
  Field rho_v;       // rank 2, (rho - 1) v
  Field a;           // rank 1
  Field grad_pi;     // rank 2, the slice solver's pressure gradient
  double reconstruction_residual = 0;  // max over slices, relative
};

PressureSplit pressure_split(const SliceFamily& fam, std::size_t snap_index,
                             double proj_tol = 1e-9);

// ---- the vertical correction ---------------------------------------------
//
// The leading slice field leaves an O(1) vertical pressure imbalance: its
// d_z pi_L forces a small secondary velocity w = (w_h, w3) in slow
// variables. w solves a linear anisotropic heat system,
//
//   d_t w_h  - Lap_eps w_h  = -grad_h pi1
//   d_t w3   - Lap_eps w3   = -eps^2 d_z pi1 - d_z pi_L,      w(0) = 0,
//
// with Lap_eps = Lap_h + eps^2 d_zz, and pi1 chosen so the slow divergence
// div_h w_h + d_z w3 vanishes mode by mode:
//
//   pi1_hat = -zeta^2 piL_hat / (|xi_h|^2 + eps^2 zeta^2).
//
// With that choice the forcing itself is solenoidal, so w stays solenoidal
// exactly. Odd vertical factors follow the derivative convention (shared
// Nyquist slots carry none of them).

Field correction_pressure(const Field& pi_L, double eps);

// rank-3 forcing of the system above at one stored time
Field correction_forcing(const Field& pi_L, double eps);

struct CorrectionTrajectory {
  GridPtr slab;
  double eps = 0;
  std::vector<double> t;
  std::vector<Field> w;      // rank 3, slow variables
  std::vector<Field> pi1;    // rank 1
  std::vector<Field> pi_L;   // rank 1, the forcing source used
  std::vector<Field> rho_v;  // rank 2, kept for the closed-form check
  double max_div_residual = 0;
};

// Marches w on the family's snapshot lattice: the heat factor is exact per
// mode, the forcing enters through the exact integral of its
// piecewise-linear interpolant.
CorrectionTrajectory evolve_correction(const SliceFamily& fam, double eps,
                                       double proj_tol = 1e-9);

// same integrator on a prescribed forcing history (oracle path); rho_v is
// optional and only the closed-form check reads it
CorrectionTrajectory evolve_correction_from(std::vector<double> t,
                                            std::vector<Field> pi_L,
                                            double eps,
                                            std::vector<Field> rho_v = {});

struct ClosedFormReport {
  double max_rel_mismatch = 0;        // marched w vs the integrated form
  double quadrature_dt = 0;           // lattice spacing the integral rides on
  double quadrature_error_estimate = 0;  // lattice-halving Richardson gap
  bool quadrature_warning = false;
};

// Independent evaluation of w: integrating the system by parts in time
// turns it into boundary terms in (rho-1) v plus one Duhamel integral of
// its heat image. Both are quadratured per mode on the same snapshot
// lattice and compared against the marched trajectory. Disagreement beyond
// the quadrature budget means the two formulations no longer describe the
// same system.
ClosedFormReport correction_closed_form_check(const CorrectionTrajectory& corr);

// ---- the assembled 3D ansatz ----------------------------------------------

// u_app = ([v]_eps + eps^2 [w_h]_eps, eps [w3]_eps) on the stretched grid,
// pi_app = [pi_L + pi_Q]_eps + eps^2 [pi1]_eps. eps must be dyadic so the
// vertical rescale reuses samples exactly. The slow-variable ingredients
// stay in the bundle: the residual expansion consumes them level by level.
struct AnsatzBundle {
  double eps = 0;
  double eta = 0;
  GridPtr fast;  // 3D grid, vertical box z_len / eps
  GridPtr slab;
  std::vector<double> t;
  std::vector<Field> u_app;   // rank 3, fast grid
  std::vector<Field> pi_app;  // rank 1, fast grid
  std::vector<Field> v, v_t;  // rank 2 slabs
  std::vector<Field> gp;      // rank 2 slab, slice pressure gradients
  std::vector<Field> a_slow;  // rank 1 slab
  std::vector<Field> pi_h;    // rank 1 slab, pi_L + pi_Q
  std::vector<Field> pi_Q;    // rank 1 slab
  CorrectionTrajectory corr;
  double max_div_residual = 0;
  double max_reconstruction_residual = 0;
};

AnsatzBundle assemble_ansatz(const SliceFamily& fam, double eps,
                             double proj_tol = 1e-9);

// t = 0 state of the ansatz on the stretched grid: a = [a(0)]_eps,
// u = ([v(0)]_eps, 0). This is exact: the vertical correction starts at 0.
FluidState ansatz_initial(const SliceFamily& fam, double eps);

// 3D entry to the common solver: checks the state is 3D with admissible
// density and solenoidal velocity, then runs the dimension-agnostic scheme.
Trajectory run_ins3d(FluidState state, double T, const RunOptions& opts = {});

// ---- residual expansion ----------------------------------------------------
//
// The ansatz misses the full 3D dynamics by a forcing-scale residual
// (1/eps)(d_t u_app + u_app . grad u_app - (1 + a_eps)(Lap u_app -
// grad pi_app)). That total splits into named parts:
//
//   E1: advection couplings of v with w, plus the vertical gradient of pi_Q
//   E2: -eps (1 + a_eps) [d_zz v]_eps, the vertical diffusion the slices
//       never saw
//   E3: a_eps against the correction's own terms
//   E4: the density mismatch b = (a_eps - [a]_eps)/eps against the slice
//       momentum balance, split along the transported parts of b
//
// The five parts must reproduce the directly evaluated total to roundoff;
// max_sum_mismatch reports the worst relative gap. a_eps defaults to the
// computable surrogate [a]_eps + eps b; passing the 3D trajectory switches
// to the exact density (labeled), with the transported split absorbing the
// difference in its b_tilde part so the identity stays exact.

struct BTransport;

struct ResidualComponent {
  std::string name;  // "E1", "E2", "E3", "E4_1", "E4_2"
  // time-integrated norms, label -> value
  std::vector<std::pair<std::string, double>> integrated;
  std::vector<double> l2;  // instantaneous L2 per snapshot
  std::vector<Field> snaps;  // rank 3 fast fields, kept only on request
};

struct ResidualBreakdown {
  std::vector<double> t;
  std::vector<ResidualComponent> components;
  std::vector<double> total_l2;  // direct evaluation per snapshot
  double max_sum_mismatch = 0;
  std::string a_source;  // "surrogate" or "exact"
  bool partial = false;  // no b available: E4 reported as zero
  double p = 4;
  double delta = 0.25;
};

ResidualBreakdown residual_components(const AnsatzBundle& bundle,
                                      const BTransport* b = nullptr,
                                      const Trajectory* exact3d = nullptr,
                                      double p = 4, double delta = 0.25,
                                      bool keep_fields = false);

// ---- density mismatch transport -------------------------------------------
//
// The 3D density differs from the lifted slice density by eps b. b obeys a
// transport equation driven by the remainder velocity R = (u_eps - u_app)/eps
// and the correction; it splits into three transported parts:
//
//   b1: advected by u_eps, forced by -eps R3 [d_z a]_eps
//   b2: advected by [v]_eps alone, forced by -R_h . grad_h [a]_eps
//       - eps [w . grad a]_eps
//   b3: advected by u_eps, forced by -eps ((eps w_h, w3)_eps + R) . grad b2
//
// b_bar = b2 carries the slowly growing part, b_tilde = b1 + b3 the
// eps-small part. The three right sides sum exactly to the transport of
// b1 + b2 + b3 by u_eps under the full forcing; max_sum_residual reports
// the worst relative defect of that identity.
struct BTransport {
  GridPtr fast;
  double eps = 0;
  std::vector<double> t;
  std::vector<Field> b1, b2, b3;  // rank 1, fast grid
  NormSeries bbar_growth;         // anisotropic Besov size of b2
  NormSeries btilde_growth;       // L^p size of b1 + b3
  double max_sum_residual = 0;
  double p = 4;
};

// exact3d == nullptr runs the leading-order variant R = 0 (then b1 and b3
// vanish and only the correction drives b2)
BTransport b_transport(const AnsatzBundle& bundle,
                       const Trajectory* exact3d = nullptr, double p = 4);

// ---- convergence against the 3D solve --------------------------------------

struct AnsatzError {
  NormSeries rms;    // RMS of u_eps - u_app per snapshot
  NormSeries aniso;  // anisotropic Besov norm of the difference
  double sup_rms = 0;
  // time-L4 of the anisotropic norm of (u_eps - u_app)/eps; boundedness
  // across an eps sweep is the remainder statement under test
  double r_induction = 0;
  double p = 4;
};

AnsatzError ansatz_error(const AnsatzBundle& bundle, const Trajectory& td,
                         double p = 4);

// log-log slope of err against eps (with goodness of fit); the convergence
// order of an eps sweep
struct EpsOrderFit {
  double order = 0;
  double r_squared = 0;
};
EpsOrderFit fitted_order(const std::vector<double>& eps,
                         const std::vector<double>& err);

}  // namespace strata
