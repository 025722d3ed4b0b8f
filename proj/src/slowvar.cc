#include "strata/slowvar.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <stdexcept>
#include <string>

#include "strata/besov.h"
#include "strata/ops.h"

namespace strata {

SliceFamily solve_slice_family(
    const std::function<InitialSpec(double z)>& make_slice, int nslices,
    double z_len, double T, const RunOptions& opts) {
  if (nslices < 5)
    throw std::invalid_argument(
        "solve_slice_family: need >= 5 slices for the z stencils");
  if (z_len <= 0)
    throw std::invalid_argument("solve_slice_family: z_len must be positive");
  if (opts.snapshot_every <= 0)
    throw std::invalid_argument(
        "solve_slice_family: snapshot_every must be positive; the family is "
        "differenced at stored times");

  SliceFamily fam;
  fam.z_len = z_len;
  fam.z.resize(nslices);
  std::vector<FluidState> initial;
  initial.reserve(nslices);
  for (int i = 0; i < nslices; ++i) {
    fam.z[i] = z_len * i / nslices;
    InitialSpec spec = make_slice(fam.z[i]);
    try {
      initial.push_back(validate_initial(spec));
    } catch (const std::domain_error& e) {
      throw std::domain_error("slice " + std::to_string(i) +
                              " (z = " + std::to_string(fam.z[i]) +
                              "): " + e.what());
    }
    if (i == 0) {
      fam.grid = initial[0].u.grid_ptr();
      fam.eta = spec.eta;
    } else {
      if (!(initial[i].u.grid() == *fam.grid))
        throw std::invalid_argument("solve_slice_family: slice " +
                                    std::to_string(i) +
                                    " lives on a different grid");
      if (spec.eta != fam.eta)
        throw std::invalid_argument(
            "solve_slice_family: eta must be common to the family");
    }
  }

  fam.slices.reserve(nslices);
  for (int i = 0; i < nslices; ++i)
    fam.slices.push_back(run(std::move(initial[i]), T, opts));
  return fam;
}

// ---- slabs -----------------------------------------------------------------

namespace {

GridPtr slab_grid_for(const Grid& g2, int nslices, double z_len) {
  if (nslices < 4 || (nslices & (nslices - 1)) != 0)
    throw std::invalid_argument(
        "stack_slices: slice count must be a power of two >= 4 to form a "
        "spectral slab");
  return make_grid3d(g2.n_h, nslices, g2.box[0], z_len, g2.dealias_fraction);
}

Field stack_onto(GridPtr slab, const std::vector<const Field*>& slices) {
  const Grid& g2 = slices[0]->grid();
  const std::size_t np2 = g2.npoints();
  Field out(std::move(slab), slices[0]->rank());
  for (int c = 0; c < out.rank(); ++c) {
    double* o = out.phys_raw(c);
    for (std::size_t i = 0; i < slices.size(); ++i)
      std::memcpy(o + i * np2, slices[i]->phys(c), np2 * sizeof(double));
  }
  return out;
}

// physical-axis Nyquist flags (shared +-n/2 slots, where odd derivative
// factors must vanish; mirrors the derivative operators)
inline void phys_nyquist(const Grid& g, const std::array<int, 3>& m,
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

void require_slab_scalar(const Field& f, const char* who) {
  if (f.grid().dims != 3 || f.rank() != 1)
    throw std::invalid_argument(std::string(who) +
                                ": rank-1 slab field required");
}

}  // namespace

Field stack_slices(const std::vector<const Field*>& slices, double z_len) {
  if (slices.empty()) throw std::invalid_argument("stack_slices: no slices");
  if (z_len <= 0)
    throw std::invalid_argument("stack_slices: z_len must be positive");
  for (const Field* f : slices)
    if (!f || f->rank() == 0)
      throw std::invalid_argument("stack_slices: missing slice field");
  const Grid& g2 = slices[0]->grid();
  if (g2.dims != 2)
    throw std::invalid_argument("stack_slices: slices must be 2D");
  for (const Field* f : slices)
    if (!(f->grid() == g2) || f->rank() != slices[0]->rank())
      throw std::invalid_argument("stack_slices: slices disagree in shape");
  return stack_onto(slab_grid_for(g2, static_cast<int>(slices.size()), z_len),
                    slices);
}

Field slab_level(const Field& slab, int i) {
  const Grid& g = slab.grid();
  if (g.dims != 3) throw std::invalid_argument("slab_level: 3D slab required");
  if (i < 0 || i >= g.n_v)
    throw std::invalid_argument("slab_level: level out of range");
  GridPtr g2 = make_grid2d(g.n_h, g.box[0], g.dealias_fraction);
  Field out(g2, slab.rank());
  const std::size_t np2 = g2->npoints();
  for (int c = 0; c < slab.rank(); ++c)
    std::memcpy(out.phys_raw(c), slab.phys(c) + i * np2,
                np2 * sizeof(double));
  return out;
}

// ---- pressure split --------------------------------------------------------

namespace {

// -Lap^{-1} applied to a spectral scalar: divide by |k|^2, kill the mean
Field neg_lap_inverse(const Field& src) {
  const Grid& g = src.grid();
  Field out(src.grid_ptr(), 1);
  const std::complex<double>* s = src.spec(0);
  std::complex<double>* o = out.spec_raw(0);
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    mode_k(g, m, k);
    const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    o[idx] = k2 == 0 ? std::complex<double>(0, 0) : s[idx] / k2;
  });
  return out;
}

}  // namespace

PressureSplit pressure_split(const SliceFamily& fam, std::size_t snap_index,
                             double proj_tol) {
  if (fam.slices.empty())
    throw std::invalid_argument("pressure_split: empty family");
  const int n = static_cast<int>(fam.slices.size());
  for (int i = 0; i < n; ++i)
    if (snap_index >= fam.slices[i].snaps.size())
      throw std::invalid_argument("pressure_split: snapshot " +
                                  std::to_string(snap_index) +
                                  " missing from slice " + std::to_string(i));
  const double t0 = fam.slices[0].snaps[snap_index].t;

  std::vector<Field> piL, piQ, v, vt, rv, av, gp;
  piL.reserve(n);
  double worst = 0;
  for (int i = 0; i < n; ++i) {
    const Snapshot& sn = fam.slices[i].snaps[snap_index];
    if (std::abs(sn.t - t0) > 1e-9 * (1 + std::abs(t0)))
      throw std::invalid_argument(
          "pressure_split: slices disagree on the snapshot time");
    FluidState st;
    st.t = sn.t;
    st.a = sn.a;
    st.u = sn.u;
    Tendency td = rhs(st, proj_tol);

    const Grid& g2 = sn.u.grid();
    GridPtr g2p = sn.u.grid_ptr();
    const std::size_t np = g2.npoints();
    const double* pa = sn.a.phys(0);
    const double* pat = td.da_dt.phys(0);

    // varrho = rho - 1 = -a/(1+a) and its time derivative, pointwise
    Field rvf(g2p, 2), gf(g2p, 2), tens(g2p, 3);
    for (int c = 0; c < 2; ++c) {
      const double* pu = sn.u.phys(c);
      const double* put = td.du_dt.phys(c);
      double* prv = rvf.phys_raw(c);
      double* pg = gf.phys_raw(c);
      for (std::size_t j = 0; j < np; ++j) {
        const double om = 1 + pa[j];
        const double vr = -pa[j] / om;
        const double vrt = -pat[j] / (om * om);
        prv[j] = vr * pu[j];
        pg[j] = vrt * pu[j] + vr * put[j];
      }
    }
    {
      const double* pu0 = sn.u.phys(0);
      const double* pu1 = sn.u.phys(1);
      double* t00 = tens.phys_raw(0);
      double* t01 = tens.phys_raw(1);
      double* t11 = tens.phys_raw(2);
      for (std::size_t j = 0; j < np; ++j) {
        const double rho = 1.0 / (1 + pa[j]);
        t00[j] = rho * pu0[j] * pu0[j];
        t01[j] = rho * pu0[j] * pu1[j];
        t11[j] = rho * pu1[j] * pu1[j];
      }
    }
    dealias_inplace(rvf);
    dealias_inplace(gf);
    dealias_inplace(tens);

    Field piL2 = neg_lap_inverse(div(gf));
    // double divergence of the symmetric tensor, row by row
    Field row0(g2p, 2), row1(g2p, 2);
    for (int c = 0; c < 2; ++c) {
      std::memcpy(row0.spec_raw(c), tens.spec(c),
                  g2.nspec() * sizeof(std::complex<double>));
      std::memcpy(row1.spec_raw(c), tens.spec(c + 1),
                  g2.nspec() * sizeof(std::complex<double>));
    }
    Field dd(g2p, 2);
    std::memcpy(dd.spec_raw(0), div(row0).spec(0),
                g2.nspec() * sizeof(std::complex<double>));
    std::memcpy(dd.spec_raw(1), div(row1).spec(0),
                g2.nspec() * sizeof(std::complex<double>));
    Field piQ2 = neg_lap_inverse(div(dd));

    Field rec = grad(lincomb(1, piL2, 1, piQ2));
    const double denom = std::max(td.grad_pi.l2_norm(), 1e-300);
    worst = std::max(worst,
                     lincomb(1, rec, -1, td.grad_pi).l2_norm() / denom);

    piL.push_back(std::move(piL2));
    piQ.push_back(std::move(piQ2));
    v.push_back(sn.u);
    vt.push_back(std::move(td.du_dt));
    rv.push_back(std::move(rvf));
    av.push_back(sn.a);
    gp.push_back(std::move(td.grad_pi));
  }

  PressureSplit ps;
  ps.t = t0;
  const Grid& g2 = fam.slices[0].snaps[snap_index].u.grid();
  ps.slab = slab_grid_for(g2, n, fam.z_len);
  auto ptrs = [&](const std::vector<Field>& f) {
    std::vector<const Field*> p(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) p[i] = &f[i];
    return p;
  };
  ps.pi_L = stack_onto(ps.slab, ptrs(piL));
  ps.pi_Q = stack_onto(ps.slab, ptrs(piQ));
  ps.v = stack_onto(ps.slab, ptrs(v));
  ps.v_t = stack_onto(ps.slab, ptrs(vt));
  ps.rho_v = stack_onto(ps.slab, ptrs(rv));
  ps.a = stack_onto(ps.slab, ptrs(av));
  ps.grad_pi = stack_onto(ps.slab, ptrs(gp));
  ps.reconstruction_residual = worst;
  return ps;
}

// ---- the vertical correction ------------------------------------------------

namespace {

void require_positive_eps(double eps, const char* who) {
  if (!(eps > 0))
    throw std::invalid_argument(std::string(who) + ": eps must be positive");
}

}  // namespace

Field correction_pressure(const Field& pi_L, double eps) {
  require_slab_scalar(pi_L, "correction_pressure");
  require_positive_eps(eps, "correction_pressure");
  const Grid& g = pi_L.grid();
  Field out(pi_L.grid_ptr(), 1);
  const std::complex<double>* s = pi_L.spec(0);
  std::complex<double>* o = out.spec_raw(0);
  const double e2 = eps * eps;
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    mode_k(g, m, k);
    const double xh2 = k[0] * k[0] + k[1] * k[1];
    const double z2 = k[2] * k[2];
    const double D = xh2 + e2 * z2;
    o[idx] = D == 0 ? std::complex<double>(0, 0) : -z2 * s[idx] / D;
  });
  return out;
}

Field correction_forcing(const Field& pi_L, double eps) {
  require_slab_scalar(pi_L, "correction_forcing");
  require_positive_eps(eps, "correction_forcing");
  const Grid& g = pi_L.grid();
  Field out(pi_L.grid_ptr(), 3);
  const std::complex<double>* s = pi_L.spec(0);
  std::complex<double>* o0 = out.spec_raw(0);
  std::complex<double>* o1 = out.spec_raw(1);
  std::complex<double>* o2 = out.spec_raw(2);
  const double e2 = eps * eps;
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    bool nyq[3];
    mode_k(g, m, k);
    phys_nyquist(g, m, nyq);
    const double xh2 = k[0] * k[0] + k[1] * k[1];
    const double z2 = k[2] * k[2];
    const double D = xh2 + e2 * z2;
    const std::complex<double> p1 =
        D == 0 ? std::complex<double>(0, 0) : -z2 * s[idx] / D;
    const std::complex<double> iu(0, 1);
    o0[idx] = nyq[0] ? std::complex<double>(0, 0) : -iu * k[0] * p1;
    o1[idx] = nyq[1] ? std::complex<double>(0, 0) : -iu * k[1] * p1;
    o2[idx] = nyq[2] ? std::complex<double>(0, 0)
                     : -iu * k[2] * (e2 * p1 + s[idx]);
  });
  return out;
}

CorrectionTrajectory evolve_correction_from(std::vector<double> t,
                                            std::vector<Field> pi_L,
                                            double eps,
                                            std::vector<Field> rho_v) {
  require_positive_eps(eps, "evolve_correction");
  if (t.empty() || t.size() != pi_L.size())
    throw std::domain_error(
        "evolve_correction: forcing history is missing or misaligned");
  if (!rho_v.empty() && rho_v.size() != t.size())
    throw std::domain_error(
        "evolve_correction: rho_v history misaligned with the lattice");
  for (std::size_t i = 0; i < pi_L.size(); ++i) {
    require_slab_scalar(pi_L[i], "evolve_correction");
    if (!(pi_L[i].grid() == pi_L[0].grid()))
      throw std::invalid_argument("evolve_correction: slab grids disagree");
    if (i > 0 && !(t[i] > t[i - 1]))
      throw std::invalid_argument(
          "evolve_correction: times must be increasing");
  }

  const GridPtr slab = pi_L[0].grid_ptr();
  const Grid& g = *slab;
  const std::size_t ns = g.nspec();
  const double e2 = eps * eps;

  // per-mode symbol of the anisotropic heat operator
  std::vector<double> mu(ns);
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    mode_k(g, m, k);
    mu[idx] = k[0] * k[0] + k[1] * k[1] + e2 * k[2] * k[2];
  });

  CorrectionTrajectory traj;
  traj.slab = slab;
  traj.eps = eps;
  traj.t = std::move(t);
  traj.w.reserve(traj.t.size());
  traj.pi1.reserve(traj.t.size());
  traj.w.push_back(Field::zeros(slab, 3));
  traj.pi1.push_back(correction_pressure(pi_L[0], eps));

  Field f_old = correction_forcing(pi_L[0], eps);
  std::vector<double> ef(ns), Aw(ns), Bw(ns);
  double last_dt = -1;
  for (std::size_t i = 1; i < traj.t.size(); ++i) {
    const double dt = traj.t[i] - traj.t[i - 1];
    if (std::abs(dt - last_dt) > 1e-14 * std::max(1.0, dt)) {
      for (std::size_t m = 0; m < ns; ++m) {
        ef[m] = std::exp(-dt * mu[m]);
        heat_trapezoid_weights(dt, mu[m], Aw[m], Bw[m]);
      }
      last_dt = dt;
    }
    Field f_new = correction_forcing(pi_L[i], eps);
    Field w(slab, 3);
    for (int c = 0; c < 3; ++c) {
      const std::complex<double>* wp = traj.w.back().spec(c);
      const std::complex<double>* f0 = f_old.spec(c);
      const std::complex<double>* f1 = f_new.spec(c);
      std::complex<double>* o = w.spec_raw(c);
      for (std::size_t m = 0; m < ns; ++m)
        o[m] = ef[m] * wp[m] + Aw[m] * f1[m] + Bw[m] * f0[m];
    }
    traj.w.push_back(std::move(w));
    traj.pi1.push_back(correction_pressure(pi_L[i], eps));
    f_old = std::move(f_new);
  }

  for (const Field& w : traj.w) {
    const double denom = std::max(w.l2_norm(), 1e-300);
    traj.max_div_residual =
        std::max(traj.max_div_residual, div(w).l2_norm() / denom);
  }
  traj.pi_L = std::move(pi_L);
  traj.rho_v = std::move(rho_v);
  return traj;
}

CorrectionTrajectory evolve_correction(const SliceFamily& fam, double eps,
                                       double proj_tol) {
  if (fam.slices.empty())
    throw std::domain_error("evolve_correction: empty family");
  const std::size_t nsnap = fam.slices[0].snaps.size();
  if (nsnap == 0)
    throw std::domain_error(
        "evolve_correction: the family carries no snapshots");
  std::vector<double> t(nsnap);
  std::vector<Field> piL, rv;
  piL.reserve(nsnap);
  rv.reserve(nsnap);
  for (std::size_t i = 0; i < nsnap; ++i) {
    PressureSplit ps = pressure_split(fam, i, proj_tol);
    t[i] = ps.t;
    piL.push_back(std::move(ps.pi_L));
    rv.push_back(std::move(ps.rho_v));
  }
  return evolve_correction_from(std::move(t), std::move(piL), eps,
                                std::move(rv));
}

// ---- closed-form cross-check -------------------------------------------------

namespace {

// the two per-mode images of (rho-1) v the integrated form is built from:
// boundary kernel (bnd) and the heat-integrand kernel (intg), separately
// for the horizontal pair and the vertical component
struct ClosedFormImages {
  Field bnd_h;   // rank 2
  Field intg_h;  // rank 2
  Field bnd_3;   // rank 1
  Field intg_3;  // rank 1
};

ClosedFormImages closed_form_images(const Field& rho_v, double eps) {
  const Grid& g = rho_v.grid();
  GridPtr gp = rho_v.grid_ptr();
  const double e2 = eps * eps;
  Field dv = div(rho_v);  // horizontal divergence: rank 2 pairs x1, x2
  ClosedFormImages im{Field(gp, 2), Field(gp, 2), Field(gp, 1), Field(gp, 1)};
  const std::complex<double>* s = dv.spec(0);
  std::complex<double>* bh0 = im.bnd_h.spec_raw(0);
  std::complex<double>* bh1 = im.bnd_h.spec_raw(1);
  std::complex<double>* ih0 = im.intg_h.spec_raw(0);
  std::complex<double>* ih1 = im.intg_h.spec_raw(1);
  std::complex<double>* b3 = im.bnd_3.spec_raw(0);
  std::complex<double>* i3 = im.intg_3.spec_raw(0);
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    bool nyq[3];
    mode_k(g, m, k);
    phys_nyquist(g, m, nyq);
    const double xh2 = k[0] * k[0] + k[1] * k[1];
    const double z2 = k[2] * k[2];
    const double D = xh2 + e2 * z2;
    const std::complex<double> iu(0, 1);
    if (xh2 == 0 || D == 0) {
      bh0[idx] = bh1[idx] = ih0[idx] = ih1[idx] = 0;
      b3[idx] = i3[idx] = 0;
      return;
    }
    // horizontal: gradient of  -zeta^2 / (D |xi_h|^2)  times div_h (rho v),
    // integrand drops the 1/D
    const std::complex<double> qh = -z2 * s[idx] / (D * xh2);
    const std::complex<double> qhi = z2 * s[idx] / xh2;
    bh0[idx] = nyq[0] ? std::complex<double>(0, 0) : iu * k[0] * qh;
    bh1[idx] = nyq[1] ? std::complex<double>(0, 0) : iu * k[1] * qh;
    ih0[idx] = nyq[0] ? std::complex<double>(0, 0) : iu * k[0] * qhi;
    ih1[idx] = nyq[1] ? std::complex<double>(0, 0) : iu * k[1] * qhi;
    // vertical: d_z of  -1/D  times div_h (rho v), integrand drops the 1/D
    b3[idx] = nyq[2] ? std::complex<double>(0, 0) : -iu * k[2] * s[idx] / D;
    i3[idx] = nyq[2] ? std::complex<double>(0, 0) : iu * k[2] * s[idx];
  });
  return im;
}

}  // namespace

ClosedFormReport correction_closed_form_check(
    const CorrectionTrajectory& corr) {
  if (corr.rho_v.empty() || corr.rho_v.size() != corr.t.size())
    throw std::invalid_argument(
        "correction_closed_form_check: the trajectory carries no (rho-1) v "
        "history");
  const std::size_t nsnap = corr.t.size();
  const Grid& g = *corr.slab;
  const std::size_t ns = g.nspec();
  const double e2 = corr.eps * corr.eps;

  std::vector<double> mu(ns);
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    mode_k(g, m, k);
    mu[idx] = k[0] * k[0] + k[1] * k[1] + e2 * k[2] * k[2];
  });

  double wmax = 0;
  for (const Field& w : corr.w) wmax = std::max(wmax, w.l2_norm());
  const double denom = std::max(wmax, 1e-300);

  ClosedFormReport rep;
  for (std::size_t i = 1; i < nsnap; ++i)
    rep.quadrature_dt = std::max(rep.quadrature_dt, corr.t[i] - corr.t[i - 1]);

  // closed form on a sub-lattice (stride 1 = every snapshot): boundary terms
  // at the evaluation time plus the marched Duhamel integral of the heat
  // image. Returns the mismatch against the marched w at each visited time,
  // and the final-field copy for the Richardson gap.
  auto sweep = [&](std::size_t stride, Field* final_out) {
    ClosedFormImages first = closed_form_images(corr.rho_v[0], corr.eps);
    Field integral = Field::zeros(corr.slab, 3);
    ClosedFormImages prev = std::move(first);
    // boundary image at t0 is reused at every time through the heat factor
    double mism = 0;
    std::vector<double> ef(ns), Aw(ns), Bw(ns);
    double last_dt = -1;
    for (std::size_t i = 0; i < nsnap; i += stride) {
      if (i > 0) {
        const std::size_t iprev = i - stride;
        const double dt = corr.t[i] - corr.t[iprev];
        if (std::abs(dt - last_dt) > 1e-14 * std::max(1.0, dt)) {
          for (std::size_t m = 0; m < ns; ++m) {
            ef[m] = std::exp(-dt * mu[m]);
            heat_trapezoid_weights(dt, mu[m], Aw[m], Bw[m]);
          }
          last_dt = dt;
        }
        ClosedFormImages cur = closed_form_images(corr.rho_v[i], corr.eps);
        for (int c = 0; c < 3; ++c) {
          const std::complex<double>* f1 =
              c < 2 ? cur.intg_h.spec(c) : cur.intg_3.spec(0);
          const std::complex<double>* f0 =
              c < 2 ? prev.intg_h.spec(c) : prev.intg_3.spec(0);
          std::complex<double>* o = integral.spec_mut(c);
          for (std::size_t m = 0; m < ns; ++m)
            o[m] = ef[m] * o[m] + Aw[m] * f1[m] + Bw[m] * f0[m];
        }
        prev = std::move(cur);
      }
      // w_cf = -(boundary now) + e^{(t-t0) heat} (boundary at t0)
      //        - integral   (horizontal);  signs flip vertically
      ClosedFormImages now =
          i == 0 ? closed_form_images(corr.rho_v[0], corr.eps)
                 : ClosedFormImages{prev.bnd_h, prev.intg_h, prev.bnd_3,
                                    prev.intg_3};
      ClosedFormImages at0 = closed_form_images(corr.rho_v[0], corr.eps);
      const double tel = corr.t[i] - corr.t[0];
      Field wcf(corr.slab, 3);
      for (int c = 0; c < 3; ++c) {
        const std::complex<double>* bn =
            c < 2 ? now.bnd_h.spec(c) : now.bnd_3.spec(0);
        const std::complex<double>* b0 =
            c < 2 ? at0.bnd_h.spec(c) : at0.bnd_3.spec(0);
        const std::complex<double>* iq = integral.spec(c);
        std::complex<double>* o = wcf.spec_raw(c);
        const double sgn = c < 2 ? -1.0 : 1.0;
        for (std::size_t m = 0; m < ns; ++m)
          o[m] = sgn * (bn[m] - std::exp(-tel * mu[m]) * b0[m] + iq[m]);
      }
      mism = std::max(mism,
                      lincomb(1, wcf, -1, corr.w[i]).l2_norm() / denom);
      if (final_out && i + stride >= nsnap) *final_out = std::move(wcf);
    }
    return mism;
  };

  Field w_full, w_half;
  rep.max_rel_mismatch = sweep(1, &w_full);

  // Richardson gap between the full lattice and every other snapshot
  if (nsnap >= 5 && (nsnap - 1) % 2 == 0) {
    sweep(2, &w_half);
    rep.quadrature_error_estimate =
        lincomb(1, w_full, -1, w_half).l2_norm() / (3 * denom);
  } else {
    rep.quadrature_warning = true;
  }
  if (nsnap < 9 || rep.quadrature_error_estimate > 2.5e-5)
    rep.quadrature_warning = true;
  return rep;
}

// log-log least squares of err against eps
EpsOrderFit fitted_order(const std::vector<double>& eps,
                         const std::vector<double>& err) {
  if (eps.size() != err.size() || eps.size() < 2)
    throw std::invalid_argument("fitted_order: need >= 2 (eps, err) pairs");
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  const double n = static_cast<double>(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0) || !(err[i] > 0))
      throw std::domain_error("fitted_order: eps and err must be positive");
    const double x = std::log(eps[i]);
    const double y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double vx = sxx - sx * sx / n;
  const double cxy = sxy - sx * sy / n;
  const double vy = syy - sy * sy / n;
  if (vx <= 0) throw std::domain_error("fitted_order: eps values coincide");
  EpsOrderFit f;
  f.order = cxy / vx;
  f.r_squared = vy <= 0 ? 1.0 : std::min(1.0, (cxy * cxy) / (vx * vy));
  return f;
}

}  // namespace strata
