#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include <unistd.h>

#include "pvfault/rng.hpp"
#include "pvfault/tensor.hpp"

namespace testing {

template <class T>
pvfault::BasicTensor<T> random_tensor(pvfault::Shape shape, pvfault::Rng& rng, double lo = -1.0,
                                      double hi = 1.0) {
  pvfault::BasicTensor<T> t(std::move(shape));
  for (T& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference of f with respect to x[i], restoring x[i] afterwards.
template <class T>
double central_difference(pvfault::BasicTensor<T>& x, std::size_t i,
                          const std::function<double()>& f, double h) {
  const T saved = x.data()[i];
  x.data()[i] = static_cast<T>(saved + h);
  const double up = f();
  x.data()[i] = static_cast<T>(saved - h);
  const double down = f();
  x.data()[i] = saved;
  return (up - down) / (2.0 * h);
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("pvfault_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
