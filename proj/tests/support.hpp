#pragma once

// Shared helpers for the unit tests.

#include "brantx/brantx.hpp"

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace bxtest {

using brantx::Index;
using brantx::Matrix;

inline Matrix random_matrix(Index r, Index c, brantx::Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Largest relative error between the analytic gradient left in each
// Parameter::grad by one backward pass and central differences of `loss`.
// Relative error per tensor is ||a - n|| / max(||a||, ||n||, floor), with
// floor = max(abs_floor, 1e-4 * largest analytic gradient norm). The floor
// keeps tensors whose exact gradient is zero (attention key biases, which
// softmax cancels) from comparing rounding noise to itself.
inline double gradient_check(const std::vector<brantx::ag::Parameter*>& params,
                             const std::function<brantx::ag::Var()>& loss, double h = 1e-5, double abs_floor = 1e-8) {
  for (auto* p : params) p->zero_grad();
  brantx::ag::backward(loss());
  double largest = 0;
  for (auto* p : params) largest = std::max(largest, p->grad.norm());
  const double floor = std::max(abs_floor, 1e-4 * largest);
  double worst = 0;
  for (auto* p : params) {
    Matrix numeric(p->value.rows(), p->value.cols());
    for (Index i = 0; i < p->value.size(); ++i) {
      const double keep = p->value.data()[i];
      p->value.data()[i] = keep + h;
      const double up = loss().scalar();
      p->value.data()[i] = keep - h;
      const double down = loss().scalar();
      p->value.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const double scale = std::max({p->grad.norm(), numeric.norm(), floor});
    worst = std::max(worst, (p->grad - numeric).norm() / scale);
  }
  return worst;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("brantx_test_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Exit status of a shell command.
inline int run_status(const std::string& cmd) {
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

inline std::string slurp(const std::filesystem::path& p) { return brantx::detail::read_file(p); }

}  // namespace bxtest
