#include "headlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "headlab/errors.hpp"

namespace headlab {

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                  const GradCheckOptions& opts) {
  for (auto& p : params) p.zero_grad();
  Tensor loss = f();
  if (!std::isfinite(loss.value()))
    throw NumericError("grad_check: non-finite loss");
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  std::mt19937_64 rng(opts.seed);
  double max_err = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    std::vector<int64_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords_per_param > 0 &&
        p.size() > opts.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_param);
    }
    for (int64_t c : coords) {
      const double orig = p.data()[c];
      p.data()[c] = orig + opts.epsilon;
      const double fp = f().value();
      p.data()[c] = orig - opts.epsilon;
      const double fm = f().value();
      p.data()[c] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite loss under perturbation");
      const double cd = (fp - fm) / (2.0 * opts.epsilon);
      const double an = analytic[pi][c];
      const double err =
          std::abs(an - cd) / std::max({std::abs(an), std::abs(cd), 1e-8});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace headlab
