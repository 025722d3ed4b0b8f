#pragma once
#include <optional>
#include <vector>

#include "strata/field.h"
#include "strata/grid.h"

namespace strata {

// physical-axis indexing everywhere: 0 -> x1, 1 -> x2, 2 -> x3 (vertical).
// Memory layout maps x3 to the outermost array axis on 3D grids.
int mem_axis(const Grid& g, int phys_axis);

// wavevector of a mode in physical-axis order (x1, x2, x3)
void mode_k(const Grid& g, const std::array<int, 3>& m, double* k);

// L2 norm of the order-th spectral derivative, ||grad^m f||_L2
double spectral_sobolev_norm(const Field& f, int order);

Field deriv(const Field& f, int phys_axis);          // spectral d/dx
Field laplacian(const Field& f);
// anisotropic slab Laplacian: Delta_h + eps2 * d_z^2 (eps2 = 1: isotropic)
Field laplacian_aniso(const Field& f, double eps2);
Field grad(const Field& scalar, bool horizontal_only = false);
// divergence pairing component c with physical axis c; a rank-2 field on a
// 3D grid is treated as horizontal
Field div(const Field& vec);

void dealias_inplace(Field& f);
Field dealiased(const Field& f);
// pointwise product, dealiased; ranks must be 1xN, Nx1 or equal (dot product)
Field multiply(const Field& a, const Field& b);

// scales every Fourier coefficient: out = alpha * f + beta * g
Field lincomb(double alpha, const Field& f, double beta, const Field& g);
Field scaled(const Field& f, double alpha);

// e^{t Delta} f (isotropic over the field's axes)
Field heat_propagate(const Field& f, double t);
// e^{t Delta_eps} with Delta_eps = Delta_h + eps2 d_z^2 on 3D grids
Field heat_propagate_aniso(const Field& f, double t, double eps2);

// classical Leray projector: remove the gradient part (k=0 mode untouched)
Field leray_project(const Field& u);
// Q u = grad invlap div u, the part Leray removes
Field gradient_part(const Field& u);

// M_a g = -grad invlap div(a g); the product a g is dealiased
Field apply_Ma(const Field& a, const Field& g);

struct NeumannResult {
  Field g;
  int iterations = 0;
  double residual = 0;  // relative increment at the final step
  bool converged = false;
  std::vector<double> history;
};
// solve (Id - M_a) g = rhs by fixed-point iteration; contraction factor is
// about ||a||_inf, so callers must keep it below 1. `guess` warm-starts.
NeumannResult invert_id_minus_Ma(const Field& a, const Field& rhs,
                                 double tol = 1e-10, int max_iter = 200,
                                 const Field* guess = nullptr);

struct ProjectResult {
  Field f;        // P_a input
  Field grad_pi;  // the pressure gradient the projection removed
  int iterations = 0;
  double residual = 0;
  bool converged = false;
};
// P_a f = f - (1+a) (Id - M_a)^{-1} grad invlap div f. With a = 0 this is the
// classical Leray projector.
ProjectResult modified_leray_project(const Field& a, const Field& f,
                                     double tol = 1e-10, int max_iter = 200,
                                     const Field* guess = nullptr);

// [f]_eps(x_h, x3) = f(x_h, eps x3) for a slab field f on a 3D grid.
// For dyadic eps = 2^-m this is exact: the box stretches by 2^m and the
// stored samples and coefficients are reused verbatim (vertical wavenumbers
// shift by m octaves). Non-dyadic eps is rejected.
Field vertical_rescale(const Field& f, double eps);

struct SplitEnergy {
  double low = 0;
  double high = 0;
};
// sharp Fourier split of the L2 energy at radius r: |k| <= r vs |k| > r
SplitEnergy sharp_split_energy(const Field& f, double radius);

}  // namespace strata
