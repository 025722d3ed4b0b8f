#pragma once
#include <complex>
#include <cstddef>

#include "strata/grid.h"

namespace strata {

// FFTW-backed transforms with an internal plan cache keyed by array shape.
// Forward (r2c) is normalized by 1/N so coefficients are Fourier-series
// amplitudes: f(x) = sum_k fhat_k exp(i k.x). Backward (c2r) is unnormalized
// and does not clobber the caller's spectral data.
// Plans use FFTW_ESTIMATE: planning is deterministic, so repeated runs of the
// same binary produce bit-identical output.
void fft_forward(const Grid& g, const double* phys, std::complex<double>* spec);
void fft_backward(const Grid& g, const std::complex<double>* spec, double* phys);

// aligned allocation for FFTW (16/32-byte SIMD alignment)
double* aligned_alloc_real(std::size_t n);
std::complex<double>* aligned_alloc_complex(std::size_t n);
void aligned_free(void* p);

}  // namespace strata
