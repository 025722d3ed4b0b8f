#pragma once
#include <array>
#include <complex>
#include <cstdint>
#include <cstring>
#include <functional>
#include <random>
#include <type_traits>
#include <vector>

#include "strata/fft.h"
#include "strata/grid.h"

namespace strata {

template <typename T>
class AlignedBuf {
 public:
  AlignedBuf() = default;
  explicit AlignedBuf(std::size_t n) : n_(n) { allocate(); }
  AlignedBuf(const AlignedBuf& o) : n_(o.n_) {
    allocate();
    if (n_) std::memcpy(p_, o.p_, n_ * sizeof(T));
  }
  AlignedBuf(AlignedBuf&& o) noexcept : p_(o.p_), n_(o.n_) { o.p_ = nullptr; o.n_ = 0; }
  AlignedBuf& operator=(AlignedBuf o) noexcept {
    std::swap(p_, o.p_);
    std::swap(n_, o.n_);
    return *this;
  }
  ~AlignedBuf() { aligned_free(p_); }

  T* data() { return p_; }
  const T* data() const { return p_; }
  std::size_t size() const { return n_; }
  T& operator[](std::size_t i) { return p_[i]; }
  const T& operator[](std::size_t i) const { return p_[i]; }
  void fill_zero() { if (n_) std::memset(p_, 0, n_ * sizeof(T)); }

 private:
  void allocate() {
    if (!n_) return;
    if constexpr (std::is_same_v<T, double>)
      p_ = aligned_alloc_real(n_);
    else
      p_ = aligned_alloc_complex(n_);
  }
  T* p_ = nullptr;
  std::size_t n_ = 0;
};

// Scalar or vector field on a periodic grid holding physical samples and/or
// Fourier coefficients, with lazy transforms between the two. Exactly the
// representations flagged current are trusted; mutating accessors invalidate
// the other side.
class Field {
 public:
  Field() = default;
  Field(GridPtr g, int rank) : g_(std::move(g)), rank_(rank) {
    phys_.resize(rank_);
    spec_.resize(rank_);
  }

  static Field zeros(GridPtr g, int rank) {
    Field f(std::move(g), rank);
    for (int c = 0; c < rank; ++c) {
      f.spec_[c] = AlignedBuf<std::complex<double>>(f.g_->nspec());
      f.spec_[c].fill_zero();
    }
    f.spec_ok_ = true;
    f.phys_ok_ = false;
    return f;
  }

  // sample a callable f(x1,..,xd) -> double (component c)
  static Field from_function(
      GridPtr g, int rank,
      const std::function<double(int c, const std::array<double, 3>&)>& fn);

  bool empty() const { return g_ == nullptr; }
  const Grid& grid() const { return *g_; }
  const GridPtr& grid_ptr() const { return g_; }
  int rank() const { return rank_; }
  bool phys_current() const { return phys_ok_; }
  bool spec_current() const { return spec_ok_; }

  void ensure_phys() const;
  void ensure_spec() const;

  const double* phys(int c = 0) const {
    ensure_phys();
    return phys_[c].data();
  }
  const std::complex<double>* spec(int c = 0) const {
    ensure_spec();
    return spec_[c].data();
  }
  // mutable access: the touched representation becomes the only current one
  double* phys_mut(int c = 0) {
    ensure_phys();
    spec_ok_ = false;
    return phys_[c].data();
  }
  std::complex<double>* spec_mut(int c = 0) {
    ensure_spec();
    phys_ok_ = false;
    return spec_[c].data();
  }
  // like the _mut accessors but without syncing first: caller overwrites all
  double* phys_raw(int c = 0) {
    alloc_phys();
    phys_ok_ = true;
    spec_ok_ = false;
    return phys_[c].data();
  }
  std::complex<double>* spec_raw(int c = 0) {
    alloc_spec();
    spec_ok_ = true;
    phys_ok_ = false;
    return spec_[c].data();
  }

  // volume-weighted quadrature norms; vector fields use the pointwise
  // Euclidean magnitude. p = inf is the max norm.
  double lp_norm(double p) const;
  // Parseval L2 from coefficients (no transform needed when spectral current)
  double l2_norm() const;
  std::complex<double> mean(int c = 0) const { return spec(c)[0]; }

  Field component(int c) const;  // scalar view copy

 private:
  void alloc_phys() const {
    for (int c = 0; c < rank_; ++c)
      if (!phys_[c].size()) phys_[c] = AlignedBuf<double>(g_->npoints());
  }
  void alloc_spec() const {
    for (int c = 0; c < rank_; ++c)
      if (!spec_[c].size()) spec_[c] = AlignedBuf<std::complex<double>>(g_->nspec());
  }

  GridPtr g_;
  int rank_ = 0;
  mutable std::vector<AlignedBuf<double>> phys_;
  mutable std::vector<AlignedBuf<std::complex<double>>> spec_;
  mutable bool phys_ok_ = false;
  mutable bool spec_ok_ = false;
};

// r2c Parseval weight: modes off the halved axis' self-conjugate planes count twice
inline double r2c_weight(const Grid& g, std::size_t ilast) {
  const int nlast = g.npts(g.dims - 1);
  return (ilast == 0 || static_cast<int>(ilast) == nlast / 2) ? 1.0 : 2.0;
}

// iterate the r2c spectral lattice, calling fn(flat_index, m[0..dims-1])
// with signed integer frequencies m
template <typename F>
void for_each_mode(const Grid& g, F&& fn) {
  const int d = g.dims;
  const int nlast = g.npts(d - 1) / 2 + 1;
  std::array<int, 3> m{0, 0, 0};
  if (d == 2) {
    std::size_t idx = 0;
    for (int i0 = 0; i0 < g.npts(0); ++i0) {
      m[0] = Grid::ifreq(i0, g.npts(0));
      for (int i1 = 0; i1 < nlast; ++i1, ++idx) {
        m[1] = i1;
        fn(idx, m);
      }
    }
  } else {
    std::size_t idx = 0;
    for (int i0 = 0; i0 < g.npts(0); ++i0) {
      m[0] = Grid::ifreq(i0, g.npts(0));
      for (int i1 = 0; i1 < g.npts(1); ++i1) {
        m[1] = Grid::ifreq(i1, g.npts(1));
        for (int i2 = 0; i2 < nlast; ++i2, ++idx) {
          m[2] = i2;
          fn(idx, m);
        }
      }
    }
  }
}

// deterministic gaussian sampler (explicit Box-Muller over mt19937_64 so
// output is identical across standard libraries)
class GaussianRng {
 public:
  explicit GaussianRng(std::uint64_t seed) : gen_(seed) {}
  double operator()();

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0;
  double uniform01();
};

// random band-limited field: coefficients ~ N(0,1) * exp(-(|k|/k0)^2),
// Hermitian-symmetrized, mean-free, truncated at the dealias cutoff
Field random_field(GridPtr g, int rank, std::uint64_t seed, double k0);

}  // namespace strata
