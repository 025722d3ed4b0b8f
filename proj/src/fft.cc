#include "strata/fft.h"

#include <fftw3.h>

#include <array>
#include <cstring>
#include <map>
#include <mutex>
#include <vector>

namespace strata {
namespace {

struct PlanPair {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  std::size_t nspec = 0;
  fftw_complex* scratch = nullptr;  // c2r destroys its input; run it on a copy
};

struct PlanCache {
  std::map<std::array<int, 3>, PlanPair> plans;
  std::mutex mu;

  PlanPair& get(const Grid& g) {
    std::array<int, 3> key{g.dims, g.n_h, g.n_v};
    std::lock_guard<std::mutex> lock(mu);
    auto it = plans.find(key);
    if (it != plans.end()) return it->second;

    PlanPair p;
    std::vector<int> shape(g.dims);
    for (int m = 0; m < g.dims; ++m) shape[m] = g.npts(m);
    p.nspec = g.nspec();
    double* rbuf = fftw_alloc_real(g.npoints());
    p.scratch = fftw_alloc_complex(p.nspec);
    p.fwd = fftw_plan_dft_r2c(g.dims, shape.data(), rbuf, p.scratch,
                              FFTW_ESTIMATE);
    p.bwd = fftw_plan_dft_c2r(g.dims, shape.data(), p.scratch, rbuf,
                              FFTW_ESTIMATE);
    fftw_free(rbuf);
    return plans.emplace(key, p).first->second;
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

}  // namespace

void fft_forward(const Grid& g, const double* phys, std::complex<double>* spec) {
  PlanPair& p = cache().get(g);
  // new-array execute; input is const in effect (r2c preserves input for
  // out-of-place transforms)
  fftw_execute_dft_r2c(p.fwd, const_cast<double*>(phys),
                       reinterpret_cast<fftw_complex*>(spec));
  const double scale = 1.0 / static_cast<double>(g.npoints());
  for (std::size_t i = 0; i < p.nspec; ++i) spec[i] *= scale;
}

void fft_backward(const Grid& g, const std::complex<double>* spec, double* phys) {
  PlanPair& p = cache().get(g);
  std::memcpy(p.scratch, spec, p.nspec * sizeof(fftw_complex));
  fftw_execute_dft_c2r(p.bwd, p.scratch, phys);
}

double* aligned_alloc_real(std::size_t n) { return fftw_alloc_real(n); }
std::complex<double>* aligned_alloc_complex(std::size_t n) {
  return reinterpret_cast<std::complex<double>*>(fftw_alloc_complex(n));
}
void aligned_free(void* p) { fftw_free(p); }

}  // namespace strata
