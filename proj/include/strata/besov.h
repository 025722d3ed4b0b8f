#pragma once
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "strata/dyadic.h"
#include "strata/field.h"

namespace strata {

struct BesovIndex {
  double p = 2;        // integrability (may be INFINITY)
  double s = 0;        // horizontal (or isotropic) regularity
  double s_prime = 0;  // vertical regularity, anisotropic norms only
  double r = 1;        // summation exponent, isotropic norms only
};

struct ShellContribution {
  int k = 0;  // horizontal or isotropic shell
  int l = 0;  // vertical shell (0 for isotropic reports)
  double value = 0;
};

struct NormReport {
  std::string name;
  double value = 0;
  std::vector<ShellContribution> shell_contributions;
  // fraction of the value carried by the two outermost retained shells;
  // the report is only trusted ("converged") below 0.05
  double truncation_mass = 0;
  bool converged = true;
};

// sum_j (2^{js} ||Delta_j f||_p)^r over retained isotropic shells, ^(1/r).
// The k = 0 mode lies in no shell: means are invisible to these norms.
NormReport iso_besov_norm(const Field& f, const BesovIndex& idx,
                          std::string name = "iso");
// double dyadic sum over horizontal and vertical shells (3D slabs)
NormReport aniso_besov_norm(const Field& f, const BesovIndex& idx,
                            std::string name = "aniso");

std::vector<double> log_time_grid(double t0, double t1, int per_octave);
// max over t_grid of sqrt(t) ||e^{t Delta} f||_inf
double heatflow_norm(const Field& f, const std::vector<double>& t_grid);

// mixed norm: outer exponent over one direction, inner over the other.
// horizontal_outer = true: || ||f(x_h,.)||_{L^q_v} ||_{L^p_h}
double mixed_norm(const Field& f, bool horizontal_outer, double p_outer,
                  double q_inner);

enum class BernKind { HBall, VBall, HRing, VRing };
struct BernsteinRow {
  int shell = 0;
  double lhs = 0;
  double rhs = 0;
  double ratio = 0;
};
struct BernsteinReport {
  std::vector<BernsteinRow> rows;
  double max_ratio = 0;
  double min_ratio = 0;
};
// ratio of the two sides of the selected band-limited derivative inequality,
// per shell. Fields must be supported in single shells (first of pair = shell
// index). Ratios measure the implicit constants; they are reported, not
// asserted against any specific value.
BernsteinReport bernstein_report(const std::vector<std::pair<int, Field>>& family,
                                 BernKind kind, double p1, double p2, double q1,
                                 double q2, int order);
// random fields supported on single shells of the grid (helper for sweeps)
std::vector<std::pair<int, Field>> make_shell_family(GridPtr g, Axes axes,
                                                     std::uint64_t seed);

struct InterpolationReport {
  double ratio_sup = 0;    // L_inf vs two-factor anisotropic interpolation
  double ratio_mixed = 0;  // Besov vs four-factor mixed-norm interpolation
};
// q, s1, s2 select the indices of the second (four-factor) inequality
InterpolationReport interpolation_report(const Field& f, double p, double q,
                                         double s1, double s2);

// ||ab|| at the product index over ||a|| ||b||; preconditions of the product
// law are enforced (positive index sums, each index <= 2/p resp. 1/p, both
// factors with nonconstant content)
double product_law_report(const Field& a, const Field& b, double p, double s1,
                          double s2, double s1p, double s2p);

struct ForcingTrajectory {
  std::vector<double> times;
  std::vector<Field> snaps;
};

struct ForcingNormReport {
  // the five time-integrated summands of the X(T) norm of the Duhamel
  // integral, plus their sum
  std::vector<NormReport> summands;
  double x_total = 0;
  // (alpha, beta) -> x_total / L1_t B^{alpha,beta} of the forcing itself
  std::vector<std::pair<std::array<double, 2>, double>> l1_ratios;
  bool quadrature_warning = false;
  double quadrature_error_estimate = 0;
};

// Duhamel integrals int_0^{t_i} e^{(t_i-t')Delta} f dt' on the snapshot grid;
// exact heat factor per interval, trapezoidal (piecewise-linear) forcing
std::vector<Field> duhamel_heat_integrals(const ForcingTrajectory& traj);

// Exact weights of one trapezoid interval against the heat kernel: the
// integral of e^{-(dt-s) mu} times a linear interpolant equals
// A f(newer) + B f(older); the previous accumulated integral decays by
// e^{-dt mu}.
void heat_trapezoid_weights(double dt, double mu, double& A, double& B);

ForcingNormReport forcing_norm(
    const ForcingTrajectory& traj, double T, double p, double delta,
    const std::vector<std::array<double, 2>>* alpha_beta = nullptr);

}  // namespace strata
