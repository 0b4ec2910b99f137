#pragma once

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <vector>

namespace renewal_lab {

// Real linear convolution through FFTW. Plans use FFTW_ESTIMATE so results
// are reproducible run to run.
class FftConvolver {
 public:
  explicit FftConvolver(std::size_t n) : n_(n), nc_(n / 2 + 1) {
    in_ = fftw_alloc_real(n_);
    spec_ = fftw_alloc_complex(nc_);
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n_), in_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), spec_, in_, FFTW_ESTIMATE);
  }
  FftConvolver(const FftConvolver&) = delete;
  FftConvolver& operator=(const FftConvolver&) = delete;
  ~FftConvolver() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(in_);
    fftw_free(spec_);
  }

  std::size_t size() const { return n_; }

  // spectrum of a zero-padded real sequence
  std::vector<std::complex<double>> spectrum(const double* a, std::size_t na) {
    load(a, na);
    fftw_execute(fwd_);
    std::vector<std::complex<double>> out(nc_);
    for (std::size_t i = 0; i < nc_; ++i) out[i] = {spec_[i][0], spec_[i][1]};
    return out;
  }

  // out[0 .. na+nb-1) = a * b, with b given by its spectrum
  void convolve(const double* a, std::size_t na, const std::vector<std::complex<double>>& b_spec,
                std::vector<double>& out) {
    load(a, na);
    fftw_execute(fwd_);
    const double scale = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < nc_; ++i) {
      const std::complex<double> z = std::complex<double>(spec_[i][0], spec_[i][1]) * b_spec[i] * scale;
      spec_[i][0] = z.real();
      spec_[i][1] = z.imag();
    }
    fftw_execute(inv_);
    out.assign(in_, in_ + n_);
  }

  void convolve(const double* a, std::size_t na, const double* b, std::size_t nb, std::vector<double>& out) {
    const auto bs = spectrum(b, nb);
    convolve(a, na, bs, out);
  }

  static std::size_t good_size(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
  }

 private:
  void load(const double* a, std::size_t na) {
    std::fill(in_, in_ + n_, 0.0);
    std::copy(a, a + std::min(na, n_), in_);
  }

  std::size_t n_, nc_;
  double* in_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan fwd_, inv_;
};

class FftPool {
 public:
  FftConvolver& get(std::size_t n) {
    auto& p = pool_[n];
    if (!p) p = std::make_unique<FftConvolver>(n);
    return *p;
  }

 private:
  std::map<std::size_t, std::unique_ptr<FftConvolver>> pool_;
};

}  // namespace renewal_lab
