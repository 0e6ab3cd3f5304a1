#ifndef HEADLAB_GRADCHECK_HPP_
#define HEADLAB_GRADCHECK_HPP_

#include <functional>
#include <random>
#include <vector>

#include "headlab/tensor.hpp"

namespace headlab {

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Coordinates checked per parameter; 0 means all of them.
  int64_t max_coords_per_param = 0;
  uint64_t seed = 0x9e3779b97f4a7c15ull;
};

// Compares analytic gradients of a scalar-valued function against central
// finite differences. `f` must rebuild its graph from the given leaves on
// every call and be deterministic. Returns the max relative error
// |analytic - cd| / max(|analytic|, |cd|, 1e-8) over sampled coordinates.
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                  const GradCheckOptions& opts = {});

}  // namespace headlab

#endif  // HEADLAB_GRADCHECK_HPP_
