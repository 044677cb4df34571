#include "fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <new>

namespace opll::detail {
namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

template <typename T>
T* fftw_alloc(std::size_t count) {
  void* p = fftw_malloc(sizeof(T) * count);
  if (p == nullptr) throw std::bad_alloc();
  return static_cast<T*>(p);
}

fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

void destroy_plan(void* plan) {
  if (plan == nullptr) return;
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(plan));
}

}  // namespace

RealForwardFft::RealForwardFft(std::size_t n)
    : n_(n),
      in_(fftw_alloc<double>(n)),
      out_(fftw_alloc<std::complex<double>>(n / 2 + 1)),
      plan_(nullptr) {
  std::lock_guard lock(planner_mutex());
  plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, as_fftw(out_), FFTW_ESTIMATE);
}

RealForwardFft::~RealForwardFft() {
  destroy_plan(plan_);
  fftw_free(in_);
  fftw_free(out_);
}

void RealForwardFft::execute() { fftw_execute(static_cast<fftw_plan>(plan_)); }

RealInverseFft::RealInverseFft(std::size_t n)
    : n_(n),
      in_(fftw_alloc<std::complex<double>>(n / 2 + 1)),
      out_(fftw_alloc<double>(n)),
      plan_(nullptr) {
  std::lock_guard lock(planner_mutex());
  plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), as_fftw(in_), out_, FFTW_ESTIMATE);
}

RealInverseFft::~RealInverseFft() {
  destroy_plan(plan_);
  fftw_free(in_);
  fftw_free(out_);
}

void RealInverseFft::execute() { fftw_execute(static_cast<fftw_plan>(plan_)); }

ComplexForwardFft::ComplexForwardFft(std::size_t n)
    : n_(n),
      in_(fftw_alloc<std::complex<double>>(n)),
      out_(fftw_alloc<std::complex<double>>(n)),
      plan_(nullptr) {
  std::lock_guard lock(planner_mutex());
  plan_ = fftw_plan_dft_1d(static_cast<int>(n), as_fftw(in_), as_fftw(out_), FFTW_FORWARD,
                           FFTW_ESTIMATE);
}

ComplexForwardFft::~ComplexForwardFft() {
  destroy_plan(plan_);
  fftw_free(in_);
  fftw_free(out_);
}

void ComplexForwardFft::execute() { fftw_execute(static_cast<fftw_plan>(plan_)); }

}  // namespace opll::detail
