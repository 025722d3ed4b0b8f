#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "strata/besov.h"
#include "strata/ops.h"
#include "strata/slowvar.h"

namespace strata {

namespace {

constexpr double kTiny = 1e-300;

// fast grid of a slab: same samples, vertical box stretched by 1/eps.
// Dyadic eps keeps the stretch factor exact in floating point.
GridPtr stretched_grid(const GridPtr& slab, double eps) {
  if (!(eps > 0) || eps > 1)
    throw std::invalid_argument("ansatz: eps must lie in (0, 1]");
  const double mreal = -std::log2(eps);
  const int m = static_cast<int>(std::lround(mreal));
  if (std::abs(mreal - m) > 1e-12)
    throw std::invalid_argument("ansatz: eps must be a dyadic 2^-m");
  return make_grid3d(slab->n_h, slab->n_v, slab->box[0],
                     slab->box[2] * std::exp2(static_cast<double>(m)),
                     slab->dealias_fraction);
}

// verbatim coefficient copy onto a layout-compatible grid. With the target
// vertical box stretched by 1/eps this IS the dyadic lift [f]_eps: the
// stored samples are reused and every vertical wavenumber shrinks by eps.
Field onto(const Field& f, const GridPtr& g) {
  if (!f.grid().same_layout(*g))
    throw std::invalid_argument("ansatz: field layout mismatch");
  Field out(g, f.rank());
  const std::size_t ns = g->nspec();
  for (int c = 0; c < f.rank(); ++c)
    std::memcpy(out.spec_raw(c), f.spec(c),
                ns * sizeof(std::complex<double>));
  return out;
}

// rank-2 horizontal field into a rank-3 one with zero vertical component
Field embed_h(const Field& f2, const GridPtr& g) {
  if (f2.rank() != 2)
    throw std::invalid_argument("ansatz: rank-2 field expected");
  Field out(g, 3);
  const std::size_t ns = g->nspec();
  for (int c = 0; c < 2; ++c)
    std::memcpy(out.spec_raw(c), f2.spec(c),
                ns * sizeof(std::complex<double>));
  std::memset(out.spec_raw(2), 0, ns * sizeof(std::complex<double>));
  return out;
}

// second vertical derivative with the full -zeta^2 symbol (matches the
// Laplacian's treatment of the shared Nyquist slot, unlike deriv twice)
Field dzz_full(const Field& f) {
  const Grid& g = f.grid();
  Field out(f.grid_ptr(), f.rank());
  std::vector<double> sym(g.nspec());
  for_each_mode(g, [&](std::size_t idx, const std::array<int, 3>& m) {
    double k[3];
    mode_k(g, m, k);
    sym[idx] = -k[2] * k[2];
  });
  for (int c = 0; c < f.rank(); ++c) {
    const std::complex<double>* s = f.spec(c);
    std::complex<double>* o = out.spec_raw(c);
    for (std::size_t i = 0; i < sym.size(); ++i) o[i] = sym[i] * s[i];
  }
  return out;
}

double trapz(const std::vector<double>& t, const std::vector<double>& v) {
  double acc = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    acc += 0.5 * (v[i] + v[i - 1]) * (t[i] - t[i - 1]);
  return acc;
}

std::string besov_label(const BesovIndex& ix) {
  std::ostringstream os;
  os << "B_" << ix.p << "^{" << ix.s << "," << ix.s_prime << "}";
  return os.str();
}

void check_lattice(const std::vector<double>& t, std::size_t i, double other,
                   const char* who) {
  if (std::abs(t[i] - other) > 1e-9 * (1 + std::abs(t[i])))
    throw std::invalid_argument(std::string(who) +
                                ": snapshot lattices disagree in time");
}

Field one_plus(const Field& a) {
  Field out(a.grid_ptr(), 1);
  const double* s = a.phys(0);
  double* o = out.phys_raw(0);
  const std::size_t n = a.grid().npoints();
  for (std::size_t i = 0; i < n; ++i) o[i] = 1 + s[i];
  return out;
}

}  // namespace

AnsatzBundle assemble_ansatz(const SliceFamily& fam, double eps,
                             double proj_tol) {
  if (fam.slices.empty())
    throw std::domain_error("assemble_ansatz: empty family");
  const std::size_t nsnap = fam.slices[0].snaps.size();
  if (nsnap == 0)
    throw std::domain_error("assemble_ansatz: the family carries no snapshots");

  AnsatzBundle b;
  b.eps = eps;
  b.eta = fam.eta;
  const double e2 = eps * eps;

  std::vector<double> t(nsnap);
  std::vector<Field> piL, rv;
  piL.reserve(nsnap);
  rv.reserve(nsnap);
  for (std::size_t i = 0; i < nsnap; ++i) {
    PressureSplit ps = pressure_split(fam, i, proj_tol);
    if (i == 0) {
      b.slab = ps.slab;
      b.fast = stretched_grid(b.slab, eps);
    }
    t[i] = ps.t;
    b.max_reconstruction_residual =
        std::max(b.max_reconstruction_residual, ps.reconstruction_residual);
    b.v.push_back(std::move(ps.v));
    b.v_t.push_back(std::move(ps.v_t));
    b.gp.push_back(std::move(ps.grad_pi));
    b.a_slow.push_back(std::move(ps.a));
    b.pi_h.push_back(lincomb(1, ps.pi_L, 1, ps.pi_Q));
    b.pi_Q.push_back(std::move(ps.pi_Q));
    piL.push_back(std::move(ps.pi_L));
    rv.push_back(std::move(ps.rho_v));
  }
  b.t = t;
  b.corr =
      evolve_correction_from(std::move(t), std::move(piL), eps, std::move(rv));

  const std::size_t ns = b.fast->nspec();
  b.u_app.reserve(nsnap);
  b.pi_app.reserve(nsnap);
  for (std::size_t i = 0; i < nsnap; ++i) {
    Field u(b.fast, 3);
    for (int c = 0; c < 3; ++c) {
      const std::complex<double>* ws = b.corr.w[i].spec(c);
      std::complex<double>* o = u.spec_raw(c);
      if (c < 2) {
        const std::complex<double>* vs = b.v[i].spec(c);
        for (std::size_t m = 0; m < ns; ++m) o[m] = vs[m] + e2 * ws[m];
      } else {
        for (std::size_t m = 0; m < ns; ++m) o[m] = eps * ws[m];
      }
    }
    Field pi(b.fast, 1);
    {
      const std::complex<double>* ph = b.pi_h[i].spec(0);
      const std::complex<double>* p1 = b.corr.pi1[i].spec(0);
      std::complex<double>* o = pi.spec_raw(0);
      for (std::size_t m = 0; m < ns; ++m) o[m] = ph[m] + e2 * p1[m];
    }
    const double denom = std::max(u.l2_norm(), kTiny);
    b.max_div_residual =
        std::max(b.max_div_residual, div(u).l2_norm() / denom);
    b.u_app.push_back(std::move(u));
    b.pi_app.push_back(std::move(pi));
  }
  return b;
}

FluidState ansatz_initial(const SliceFamily& fam, double eps) {
  if (fam.slices.empty())
    throw std::domain_error("ansatz_initial: empty family");
  std::vector<const Field*> a0, u0;
  a0.reserve(fam.slices.size());
  u0.reserve(fam.slices.size());
  for (const Trajectory& tr : fam.slices) {
    if (tr.snaps.empty())
      throw std::domain_error("ansatz_initial: a slice has no snapshots");
    a0.push_back(&tr.snaps[0].a);
    u0.push_back(&tr.snaps[0].u);
  }
  Field a_slab = stack_slices(a0, fam.z_len);
  Field u_slab = stack_slices(u0, fam.z_len);
  GridPtr fast = stretched_grid(a_slab.grid_ptr(), eps);

  FluidState st;
  st.t = fam.slices[0].snaps[0].t;
  st.a = onto(a_slab, fast);
  st.u = embed_h(u_slab, fast);
  st.grad_pi = Field::zeros(fast, 3);
  return st;
}

Trajectory run_ins3d(FluidState state, double T, const RunOptions& opts) {
  if (state.u.empty() || state.u.grid().dims != 3 || state.u.rank() != 3 ||
      state.a.rank() != 1)
    throw std::invalid_argument(
        "run_ins3d: 3D state required (rank-3 u, rank-1 a)");
  const double* ap = state.a.phys(0);
  const std::size_t n = state.a.grid().npoints();
  double rmin = std::numeric_limits<double>::infinity(), rmax = -rmin;
  for (std::size_t i = 0; i < n; ++i) {
    const double rho = 1.0 / (1 + ap[i]);
    rmin = std::min(rmin, rho);
    rmax = std::max(rmax, rho);
  }
  if (rmin < 0.75 - 1e-12 || rmax > 1.25 + 1e-12) {
    std::ostringstream os;
    os << "run_ins3d: density range [" << rmin << ", " << rmax
       << "] leaves [3/4, 5/4]";
    throw std::domain_error(os.str());
  }
  const double dres =
      div(state.u).l2_norm() / std::max(state.u.l2_norm(), kTiny);
  if (dres > 1e-8) {
    std::ostringstream os;
    os << "run_ins3d: initial velocity is not solenoidal (relative "
          "divergence "
       << dres << ")";
    throw std::domain_error(os.str());
  }
  return run(std::move(state), T, opts);
}

// ---- residual expansion ------------------------------------------------

ResidualBreakdown residual_components(const AnsatzBundle& bundle,
                                      const BTransport* bt,
                                      const Trajectory* exact3d, double p,
                                      double delta, bool keep_fields) {
  const std::size_t nsnap = bundle.t.size();
  if (nsnap == 0 || bundle.u_app.size() != nsnap)
    throw std::invalid_argument("residual_components: empty bundle");
  const double eps = bundle.eps;
  const double e2 = eps * eps;
  const GridPtr& fast = bundle.fast;
  const std::size_t ns = fast->nspec();

  if (bt) {
    if (bt->t.size() != nsnap || !(*bt->fast == *fast))
      throw std::invalid_argument(
          "residual_components: transport lattice does not match the bundle");
    for (std::size_t i = 0; i < nsnap; ++i)
      check_lattice(bundle.t, i, bt->t[i], "residual_components");
  }
  if (exact3d) {
    if (exact3d->snaps.size() < nsnap)
      throw std::invalid_argument(
          "residual_components: 3D trajectory misses snapshots");
    if (!(exact3d->snaps[0].u.grid() == *fast))
      throw std::domain_error(
          "residual_components: 3D trajectory grid does not match the bundle");
    for (std::size_t i = 0; i < nsnap; ++i)
      check_lattice(bundle.t, i, exact3d->snaps[i].t, "residual_components");
  }

  ResidualBreakdown rb;
  rb.t = bundle.t;
  rb.p = p;
  rb.delta = delta;
  rb.a_source = exact3d ? "exact" : "surrogate";
  rb.partial = (!bt && !exact3d);

  const BesovIndex ix_main{p, -1 + 2 / p, 1 / p, 1};
  const BesovIndex ix_e1b{2, 0, 0.5, 1};
  const BesovIndex ix_reg{p, -1 + delta + 3 / p, -delta, 1};

  const char* names[5] = {"E1", "E2", "E3", "E4_1", "E4_2"};
  rb.components.resize(5);
  std::vector<std::vector<double>> series(6);  // 5 prescribed + E1's second
  for (int c = 0; c < 5; ++c) {
    rb.components[c].name = names[c];
    rb.components[c].l2.resize(nsnap);
    series[c].resize(nsnap);
  }
  series[5].resize(nsnap);
  rb.total_l2.resize(nsnap);

  for (std::size_t i = 0; i < nsnap; ++i) {
    const Field& v = bundle.v[i];
    const Field& vt = bundle.v_t[i];
    const Field& gp = bundle.gp[i];
    const Field& a2 = bundle.a_slow[i];
    const Field& piH = bundle.pi_h[i];
    const Field& piQ = bundle.pi_Q[i];
    const Field& w = bundle.corr.w[i];
    const Field& pi1 = bundle.corr.pi1[i];
    const Field& piL = bundle.corr.pi_L[i];
    const Field& uapp = bundle.u_app[i];

    // density carried by the residual: exact from the 3D solve when given,
    // else the transported surrogate [a]_eps + eps b
    Field lift_a = onto(a2, fast);
    Field a_eps, bbar, btil;
    if (exact3d) {
      a_eps = onto(exact3d->snaps[i].a, fast);
      Field b_eff = scaled(lincomb(1, a_eps, -1, lift_a), 1 / eps);
      if (bt) {
        bbar = bt->b2[i];
        btil = lincomb(1, b_eff, -1, bbar);
      } else {
        bbar = Field::zeros(fast, 1);
        btil = std::move(b_eff);
      }
    } else if (bt) {
      Field bsum = lincomb(1, lincomb(1, bt->b1[i], 1, bt->b2[i]), 1,
                           bt->b3[i]);
      a_eps = lincomb(1, lift_a, eps, bsum);
      bbar = bt->b2[i];
      btil = lincomb(1, bt->b1[i], 1, bt->b3[i]);
    } else {
      a_eps = lift_a;
      bbar = Field::zeros(fast, 1);
      btil = Field::zeros(fast, 1);
    }
    Field one_pa = one_plus(a_eps);

    // semi-discrete tendency of the correction on the slab
    Field w_t = lincomb(1, laplacian_aniso(w, e2), 1,
                        correction_forcing(piL, eps));

    // E1: the advection couplings the slices never saw, plus the vertical
    // gradient of the quadratic pressure
    Field E1;
    {
      Field A(bundle.slab, 3), B(bundle.slab, 3);
      for (int c = 0; c < 3; ++c) {
        const std::complex<double>* ws = w.spec(c);
        std::complex<double>* oa = A.spec_raw(c);
        std::complex<double>* ob = B.spec_raw(c);
        if (c < 2) {
          const std::complex<double>* vs = v.spec(c);
          for (std::size_t m = 0; m < ns; ++m) {
            oa[m] = eps * ws[m];
            ob[m] = vs[m] + e2 * ws[m];
          }
        } else {
          for (std::size_t m = 0; m < ns; ++m) {
            oa[m] = ws[m];
            ob[m] = e2 * ws[m];
          }
        }
      }
      Field adv = Field::zeros(bundle.slab, 3);
      for (int j = 0; j < 3; ++j)
        adv = lincomb(1, adv, 1, multiply(B.component(j), deriv(A, j)));
      Field wv = Field::zeros(bundle.slab, 2);
      for (int j = 0; j < 3; ++j)
        wv = lincomb(1, wv, 1, multiply(w.component(j), deriv(v, j)));
      Field dzQ = deriv(piQ, 2);
      Field e1s(bundle.slab, 3);
      for (int c = 0; c < 3; ++c) {
        const std::complex<double>* as = adv.spec(c);
        std::complex<double>* o = e1s.spec_raw(c);
        if (c < 2) {
          const std::complex<double>* wvs = wv.spec(c);
          for (std::size_t m = 0; m < ns; ++m) o[m] = as[m] + eps * wvs[m];
        } else {
          const std::complex<double>* qs = dzQ.spec(0);
          for (std::size_t m = 0; m < ns; ++m) o[m] = as[m] + qs[m];
        }
      }
      E1 = onto(e1s, fast);
    }

    // E2: vertical diffusion of the slice field
    Field E2 = scaled(multiply(one_pa, embed_h(dzz_full(v), fast)), -eps);

    // E3: the density times the correction's own momentum balance
    Field E3;
    {
      Field dzQ = deriv(piQ, 2);
      Field br(bundle.slab, 3);
      for (int c = 0; c < 3; ++c) {
        const std::complex<double>* ws = w_t.spec(c);
        std::complex<double>* o = br.spec_raw(c);
        if (c < 2) {
          for (std::size_t m = 0; m < ns; ++m) o[m] = eps * ws[m];
        } else {
          const std::complex<double>* qs = dzQ.spec(0);
          for (std::size_t m = 0; m < ns; ++m) o[m] = ws[m] - qs[m];
        }
      }
      E3 = scaled(multiply(a_eps, onto(br, fast)), -1);
    }

    // E4: the density mismatch against the slice momentum balance, split
    // along the transported parts of b
    Field br4 = embed_h(lincomb(1, laplacian_aniso(v, 0.0), -1, gp), fast);
    Field E41 = scaled(multiply(bbar, br4), -1);
    Field E42 = scaled(multiply(btil, br4), -1);

    // the directly evaluated total; the time derivative is substituted from
    // the stored slice tendencies and the correction's semi-discrete one
    Field Edir;
    {
      Field dU(fast, 3);
      for (int c = 0; c < 3; ++c) {
        const std::complex<double>* ws = w_t.spec(c);
        std::complex<double>* o = dU.spec_raw(c);
        if (c < 2) {
          const std::complex<double>* vs = vt.spec(c);
          for (std::size_t m = 0; m < ns; ++m)
            o[m] = vs[m] / eps + eps * ws[m];
        } else {
          for (std::size_t m = 0; m < ns; ++m) o[m] = ws[m];
        }
      }
      Field adv = Field::zeros(fast, 3);
      for (int j = 0; j < 3; ++j)
        adv = lincomb(1, adv, 1, multiply(uapp.component(j), deriv(uapp, j)));
      // pressure gradient the ansatz actually uses: the slice solver's
      // horizontal gradient plus the correction pressure, and the scalar
      // pressures' vertical derivative
      Field Gpi(fast, 3);
      {
        Field d0 = deriv(pi1, 0), d1 = deriv(pi1, 1), d2 = deriv(pi1, 2);
        Field dH = deriv(piH, 2);
        const std::complex<double>* g0 = gp.spec(0);
        const std::complex<double>* g1 = gp.spec(1);
        const std::complex<double>* p0 = d0.spec(0);
        const std::complex<double>* p1s = d1.spec(0);
        const std::complex<double>* p2 = d2.spec(0);
        const std::complex<double>* hz = dH.spec(0);
        std::complex<double>* o0 = Gpi.spec_raw(0);
        std::complex<double>* o1 = Gpi.spec_raw(1);
        std::complex<double>* o2 = Gpi.spec_raw(2);
        for (std::size_t m = 0; m < ns; ++m) {
          o0[m] = g0[m] + e2 * p0[m];
          o1[m] = g1[m] + e2 * p1s[m];
          o2[m] = eps * (hz[m] + e2 * p2[m]);
        }
      }
      Edir = lincomb(1, dU, 1 / eps, adv);
      Edir = lincomb(1, Edir, -1 / eps, multiply(one_pa, laplacian(uapp)));
      Edir = lincomb(1, Edir, 1 / eps, multiply(one_pa, Gpi));
    }

    Field sum = lincomb(1, lincomb(1, E1, 1, E2), 1,
                        lincomb(1, E3, 1, lincomb(1, E41, 1, E42)));
    const double dn = std::max(Edir.l2_norm(), kTiny);
    rb.max_sum_mismatch = std::max(
        rb.max_sum_mismatch, lincomb(1, Edir, -1, sum).l2_norm() / dn);
    rb.total_l2[i] = Edir.l2_norm();

    const Field* comps[5] = {&E1, &E2, &E3, &E41, &E42};
    const BesovIndex* pres[5] = {&ix_main, &ix_reg, &ix_main, &ix_main,
                                 &ix_reg};
    for (int c = 0; c < 5; ++c) {
      rb.components[c].l2[i] = comps[c]->l2_norm();
      series[c][i] = aniso_besov_norm(*comps[c], *pres[c]).value;
    }
    series[5][i] = aniso_besov_norm(E1, ix_e1b).value;

    if (keep_fields) {
      rb.components[0].snaps.push_back(std::move(E1));
      rb.components[1].snaps.push_back(std::move(E2));
      rb.components[2].snaps.push_back(std::move(E3));
      rb.components[3].snaps.push_back(std::move(E41));
      rb.components[4].snaps.push_back(std::move(E42));
    }
  }

  const BesovIndex* pres[5] = {&ix_main, &ix_reg, &ix_main, &ix_main,
                               &ix_reg};
  for (int c = 0; c < 5; ++c) {
    rb.components[c].integrated.push_back(
        {"L1_t " + besov_label(*pres[c]), trapz(rb.t, series[c])});
    if (c == 0)
      rb.components[c].integrated.push_back(
          {"L1_t " + besov_label(ix_e1b), trapz(rb.t, series[5])});
    rb.components[c].integrated.push_back(
        {"L1_t L2", trapz(rb.t, rb.components[c].l2)});
  }
  return rb;
}

// ---- density mismatch transport ------------------------------------------

namespace {

// everything the transport right side needs at one snapshot
struct TransportPack {
  Field adv;   // rank 3: the advecting velocity (exact u or the ansatz)
  Field vlift; // rank 3: ([v]_eps, 0), the slow advection of b2
  Field wr;    // rank 3: adv - vlift, what multiplies grad b2 in b3
  Field fade;  // rank 1: forcing of b1, -R3 d_z [a]_eps
  Field fslow; // rank 1: forcing of b2, -R_h . grad_h [a]_eps - eps [w.grad a]_eps
};

TransportPack transport_pack(const AnsatzBundle& bundle,
                             const Trajectory* exact3d, std::size_t i) {
  const GridPtr& fast = bundle.fast;
  TransportPack pk;
  pk.vlift = embed_h(bundle.v[i], fast);
  if (exact3d) {
    pk.adv = onto(exact3d->snaps[i].u, fast);
    Field R = scaled(lincomb(1, pk.adv, -1, bundle.u_app[i]), 1 / bundle.eps);
    Field lift_a = onto(bundle.a_slow[i], fast);
    pk.fade = scaled(multiply(R.component(2), deriv(lift_a, 2)), -1);
    Field fh = Field::zeros(fast, 1);
    for (int j = 0; j < 2; ++j)
      fh = lincomb(1, fh, -1, multiply(R.component(j), deriv(lift_a, j)));
    pk.fslow = std::move(fh);
  } else {
    pk.adv = bundle.u_app[i];
    pk.fade = Field::zeros(fast, 1);
    pk.fslow = Field::zeros(fast, 1);
  }
  // -eps [w . grad a]_eps, a slow product lifted
  {
    const Field& w = bundle.corr.w[i];
    const Field& a2 = bundle.a_slow[i];
    Field wda = Field::zeros(bundle.slab, 1);
    for (int j = 0; j < 3; ++j)
      wda = lincomb(1, wda, 1, multiply(w.component(j), deriv(a2, j)));
    pk.fslow = lincomb(1, pk.fslow, -bundle.eps, onto(wda, fast));
  }
  pk.wr = lincomb(1, pk.adv, -1, pk.vlift);
  return pk;
}

Field lerp(const Field& f0, const Field& f1, double lam) {
  return lincomb(1 - lam, f0, lam, f1);
}

struct TransportRhs {
  Field db1, db2, db3;
};

TransportRhs transport_rhs(const TransportPack& pk, const Field& b1,
                           const Field& b2, const Field& b3) {
  TransportRhs r;
  Field g1 = grad(b1), g2 = grad(b2), g3 = grad(b3);
  r.db1 = pk.fade;
  r.db3 = Field::zeros(b1.grid_ptr(), 1);
  for (int j = 0; j < 3; ++j) {
    Field aj = pk.adv.component(j);
    r.db1 = lincomb(1, r.db1, -1, multiply(aj, g1.component(j)));
    r.db3 = lincomb(1, r.db3, -1, multiply(aj, g3.component(j)));
    r.db3 = lincomb(1, r.db3, -1,
                    multiply(pk.wr.component(j), g2.component(j)));
  }
  r.db2 = pk.fslow;
  for (int j = 0; j < 2; ++j)
    r.db2 = lincomb(1, r.db2, -1,
                    multiply(pk.vlift.component(j), g2.component(j)));
  return r;
}

double max_component_speed(const Field& u, int c) {
  return u.component(c).lp_norm(std::numeric_limits<double>::infinity());
}

}  // namespace

BTransport b_transport(const AnsatzBundle& bundle, const Trajectory* exact3d,
                       double p) {
  const std::size_t nsnap = bundle.t.size();
  if (nsnap == 0)
    throw std::invalid_argument("b_transport: empty bundle");
  const GridPtr& fast = bundle.fast;
  if (exact3d) {
    if (exact3d->snaps.size() < nsnap)
      throw std::invalid_argument("b_transport: 3D trajectory misses snapshots");
    if (!(exact3d->snaps[0].u.grid() == *fast))
      throw std::domain_error(
          "b_transport: 3D trajectory grid does not match the bundle");
    for (std::size_t i = 0; i < nsnap; ++i)
      check_lattice(bundle.t, i, exact3d->snaps[i].t, "b_transport");
  }

  BTransport bt;
  bt.fast = fast;
  bt.eps = bundle.eps;
  bt.t = bundle.t;
  bt.p = p;
  const BesovIndex ix_bar{p, 2 / p, 1 / p, 1};
  bt.bbar_growth.name = besov_label(ix_bar);
  bt.btilde_growth.name = "L^p";

  Field b1 = Field::zeros(fast, 1);
  Field b2 = Field::zeros(fast, 1);
  Field b3 = Field::zeros(fast, 1);

  // physical spacing per axis; the advective stability bound uses the most
  // restrictive axis over the interval endpoints
  const double h[3] = {fast->box[0] / fast->n_h, fast->box[1] / fast->n_h,
                       fast->box[2] / fast->n_v};

  TransportPack pk0 = transport_pack(bundle, exact3d, 0);
  auto record = [&](std::size_t i, const TransportPack& pk) {
    bt.b1.push_back(b1);
    bt.b2.push_back(b2);
    bt.b3.push_back(b3);
    bt.bbar_growth.samples.push_back(
        {bt.t[i], aniso_besov_norm(b2, ix_bar).value});
    bt.btilde_growth.samples.push_back(
        {bt.t[i], lincomb(1, b1, 1, b3).lp_norm(p)});
    // the three right sides must add up to one transport of b1 + b2 + b3
    TransportRhs r = transport_rhs(pk, b1, b2, b3);
    Field bsum = lincomb(1, lincomb(1, b1, 1, b2), 1, b3);
    Field target = lincomb(1, pk.fade, 1, pk.fslow);
    Field gs = grad(bsum);
    for (int j = 0; j < 3; ++j)
      target = lincomb(1, target, -1,
                       multiply(pk.adv.component(j), gs.component(j)));
    Field lhs = lincomb(1, lincomb(1, r.db1, 1, r.db2), 1, r.db3);
    const double dn = std::max(target.l2_norm(), kTiny);
    bt.max_sum_residual = std::max(
        bt.max_sum_residual, lincomb(1, lhs, -1, target).l2_norm() / dn);
  };
  record(0, pk0);

  for (std::size_t i = 1; i < nsnap; ++i) {
    TransportPack pk1 = transport_pack(bundle, exact3d, i);
    const double t0 = bundle.t[i - 1], t1 = bundle.t[i];
    const double dt_int = t1 - t0;

    double dt_stab = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 3; ++c) {
      const double sp = std::max(max_component_speed(pk0.adv, c),
                                 max_component_speed(pk1.adv, c));
      if (sp > 0) dt_stab = std::min(dt_stab, 0.4 * h[c] / sp);
    }
    const int nsub =
        std::max(1, static_cast<int>(std::ceil(dt_int / dt_stab)));
    const double hstep = dt_int / nsub;

    for (int s = 0; s < nsub; ++s) {
      const double ts = t0 + s * hstep;
      auto pack_at = [&](double tau) {
        const double lam = (tau - t0) / dt_int;
        TransportPack pk;
        pk.adv = lerp(pk0.adv, pk1.adv, lam);
        pk.vlift = lerp(pk0.vlift, pk1.vlift, lam);
        pk.wr = lerp(pk0.wr, pk1.wr, lam);
        pk.fade = lerp(pk0.fade, pk1.fade, lam);
        pk.fslow = lerp(pk0.fslow, pk1.fslow, lam);
        return pk;
      };
      TransportPack pa = pack_at(ts);
      TransportPack pm = pack_at(ts + hstep / 2);
      TransportPack pb = pack_at(ts + hstep);

      TransportRhs k1 = transport_rhs(pa, b1, b2, b3);
      TransportRhs k2 = transport_rhs(
          pm, lincomb(1, b1, hstep / 2, k1.db1),
          lincomb(1, b2, hstep / 2, k1.db2), lincomb(1, b3, hstep / 2, k1.db3));
      TransportRhs k3 = transport_rhs(
          pm, lincomb(1, b1, hstep / 2, k2.db1),
          lincomb(1, b2, hstep / 2, k2.db2), lincomb(1, b3, hstep / 2, k2.db3));
      TransportRhs k4 = transport_rhs(
          pb, lincomb(1, b1, hstep, k3.db1), lincomb(1, b2, hstep, k3.db2),
          lincomb(1, b3, hstep, k3.db3));

      auto combine = [&](Field& b, const Field& ka, const Field& kb,
                         const Field& kc, const Field& kd) {
        b = lincomb(1, b, hstep / 6,
                    lincomb(1, lincomb(1, ka, 2, kb), 1,
                            lincomb(2, kc, 1, kd)));
      };
      combine(b1, k1.db1, k2.db1, k3.db1, k4.db1);
      combine(b2, k1.db2, k2.db2, k3.db2, k4.db2);
      combine(b3, k1.db3, k2.db3, k3.db3, k4.db3);
    }
    record(i, pk1);
    pk0 = std::move(pk1);
  }
  return bt;
}

// ---- convergence against the 3D solve -------------------------------------

AnsatzError ansatz_error(const AnsatzBundle& bundle, const Trajectory& td,
                         double p) {
  const std::size_t nsnap = bundle.t.size();
  if (nsnap == 0)
    throw std::invalid_argument("ansatz_error: empty bundle");
  if (td.snaps.size() < nsnap)
    throw std::domain_error("ansatz_error: trajectory misses snapshots");
  if (!(td.snaps[0].u.grid() == *bundle.fast))
    throw std::domain_error(
        "ansatz_error: trajectory grid does not match the bundle");
  for (std::size_t i = 0; i < nsnap; ++i)
    check_lattice(bundle.t, i, td.snaps[i].t, "ansatz_error");

  AnsatzError ae;
  ae.p = p;
  const BesovIndex ix{p, -0.5 + 2 / p, 1 / p, 1};
  ae.rms.name = "rms(u - u_app)";
  ae.aniso.name = besov_label(ix);
  const double sqV = std::sqrt(bundle.fast->volume());

  std::vector<double> quart(nsnap);
  for (std::size_t i = 0; i < nsnap; ++i) {
    Field d = lincomb(1, onto(td.snaps[i].u, bundle.fast), -1,
                      bundle.u_app[i]);
    const double rms = d.l2_norm() / sqV;
    ae.rms.samples.push_back({bundle.t[i], rms});
    ae.sup_rms = std::max(ae.sup_rms, rms);
    const double an = aniso_besov_norm(d, ix).value;
    ae.aniso.samples.push_back({bundle.t[i], an});
    const double scaled_an = an / bundle.eps;
    quart[i] = scaled_an * scaled_an * scaled_an * scaled_an;
  }
  ae.r_induction = std::pow(trapz(bundle.t, quart), 0.25);
  return ae;
}

}  // namespace strata
