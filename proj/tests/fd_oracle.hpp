#pragma once

// Central finite-difference oracle for gradient checks. Test-only; it uses
// nothing but forward evaluations of the function under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "adi/autograd.hpp"

namespace adi::testing {

struct FdReport {
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]"
  std::size_t checked = 0;
};

/// Denominator floor of the relative error; gradients smaller than this are
/// compared in absolute terms against floor * tolerance.
inline constexpr double kFdFloor = 1e-6;

inline double fd_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFdFloor});
}

/// Compares `analytic` (aligned with params) against central differences of f
/// with step h, entry by entry.
inline FdReport fd_check(num::ParamSet& params, const std::vector<num::Matrix>& analytic,
                         const std::function<double()>& f, double h = 1e-4) {
  FdReport rep;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].value.data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double orig = data[j];
      data[j] = orig + h;
      const double up = f();
      data[j] = orig - h;
      const double down = f();
      data[j] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = fd_rel_error(analytic[i].data()[j], numeric);
      ++rep.checked;
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst = params[i].name + "[" + std::to_string(j) + "]";
      }
    }
  }
  return rep;
}

}  // namespace adi::testing
