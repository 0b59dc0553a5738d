#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "qsmlab/volume.hpp"

namespace qsmlab {
namespace {

// FFTW planning is not thread-safe; execution on new arrays is. Plans are
// created once per (dims, direction) and kept for the process lifetime.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(const Dims& d, int sign) {
    const auto key = std::make_tuple(d.nx, d.ny, d.nz, sign);
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    const std::size_t n = d.size();
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    fftw_plan plan = fftw_plan_dft_3d(static_cast<int>(d.nx), static_cast<int>(d.ny),
                                      static_cast<int>(d.nz), in, out, sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    if (plan == nullptr) throw NumericalError("FFTW failed to plan dims " + to_string(d));
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t, int>, fftw_plan> plans_;
};

ComplexVolume3D transform(const ComplexVolume3D& v, int sign) {
  validate_dims(v.dims());
  for (const auto& c : v.data()) {
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) {
      throw NumericalError("fft3: non-finite input");
    }
  }
  ComplexVolume3D out(v.dims(), v.voxel_size());
  fftw_plan plan = PlanCache::instance().get(v.dims(), sign);
  // fftw_complex is layout-compatible with std::complex<double>.
  auto* in = reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(v.data().data()));
  fftw_execute_dft(plan, in, reinterpret_cast<fftw_complex*>(out.data().data()));
  return out;
}

}  // namespace

ComplexVolume3D fft3(const Volume3D& v) { return transform(ComplexVolume3D(v), FFTW_FORWARD); }

ComplexVolume3D fft3(const ComplexVolume3D& v) { return transform(v, FFTW_FORWARD); }

ComplexVolume3D ifft3(const ComplexVolume3D& v) {
  ComplexVolume3D out = transform(v, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(v.size());
  for (auto& c : out.data()) c *= scale;
  return out;
}

}  // namespace qsmlab
