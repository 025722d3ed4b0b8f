#pragma once
#include "strata/field.h"
#include "strata/grid.h"

namespace strata {

// Smooth dyadic bump phi supported in (3/4, 8/3) with
//   sum_{j in Z} phi(2^-j tau) = 1  for all tau > 0,
// and the companion low-frequency profile
//   chi(tau) = 1 - sum_{j >= 0} phi(2^-j tau),
// supported in [0, 4/3) and equal to 1 on [0, 3/4].
//
// phi is evaluated from a table in lambda = log2(tau) with an integer number
// of nodes per octave. Shifting lambda by an integer shifts table indices by
// a whole number of nodes, so the interpolated partition sum telescopes to
// the interpolation of the constant 1: the partition identity holds to
// rounding for every tau, not just at nodes.
double lp_phi(double tau);
double lp_chi(double tau);

// frequency-axis selection for block filters
enum class Axes { Iso, Horizontal, Vertical };

// inclusive dyadic shell index range [j_min, j_max] such that the mask
// phi(2^-j |k|) is nonzero on some retained (dealiased) mode of the grid
struct ShellRange {
  int j_min;
  int j_max;
  int count() const { return j_max - j_min + 1; }
};
ShellRange shell_range(const Grid& g, Axes axes);

// |k| over the selected axes for a mode with integer frequencies m
double mode_radius(const Grid& g, Axes axes, const std::array<int, 3>& m);

// Delta_j f: multiply the spectrum by phi(2^-j |k|) over the selected axes
Field dyadic_block(const Field& f, Axes axes, int j);
// S_j f: multiply by chi(2^-j |k|)
Field lowpass_block(const Field& f, Axes axes, int j);

// grids must hold at least this many shells per used axis set
inline constexpr int kMinShells = 3;

}  // namespace strata
