#pragma once

// Thin RAII wrappers over FFTW3 plans. Planning goes through a global mutex
// since the FFTW planner is not re-entrant; execution is thread safe.

#include <complex>
#include <cstddef>
#include <span>

namespace opll::detail {

/// Real-to-complex forward transform of length n (n/2+1 outputs).
class RealForwardFft {
 public:
  explicit RealForwardFft(std::size_t n);
  ~RealForwardFft();
  RealForwardFft(const RealForwardFft&) = delete;
  RealForwardFft& operator=(const RealForwardFft&) = delete;

  std::span<double> input() { return {in_, n_}; }
  std::span<const std::complex<double>> output() const { return {out_, n_ / 2 + 1}; }
  void execute();

 private:
  std::size_t n_;
  double* in_;
  std::complex<double>* out_;
  void* plan_;
};

/// Complex-to-real inverse transform of length n, unnormalized.
class RealInverseFft {
 public:
  explicit RealInverseFft(std::size_t n);
  ~RealInverseFft();
  RealInverseFft(const RealInverseFft&) = delete;
  RealInverseFft& operator=(const RealInverseFft&) = delete;

  std::span<std::complex<double>> input() { return {in_, n_ / 2 + 1}; }
  std::span<const double> output() const { return {out_, n_}; }
  void execute();

 private:
  std::size_t n_;
  std::complex<double>* in_;
  double* out_;
  void* plan_;
};

/// Complex forward transform of length n, unnormalized.
class ComplexForwardFft {
 public:
  explicit ComplexForwardFft(std::size_t n);
  ~ComplexForwardFft();
  ComplexForwardFft(const ComplexForwardFft&) = delete;
  ComplexForwardFft& operator=(const ComplexForwardFft&) = delete;

  std::span<std::complex<double>> input() { return {in_, n_}; }
  std::span<const std::complex<double>> output() const { return {out_, n_}; }
  void execute();

 private:
  std::size_t n_;
  std::complex<double>* in_;
  std::complex<double>* out_;
  void* plan_;
};

}  // namespace opll::detail
