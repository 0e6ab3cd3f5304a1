#include "headlab/schedule.hpp"

#include <cmath>
#include <string>

#include "headlab/errors.hpp"

namespace headlab {

double lr_at_step(int64_t t, const PruneSchedule& s) {
  if (t < 0 || t > s.total_steps)
    throw ScheduleError("lr_at_step: step " + std::to_string(t) +
                        " outside [0," + std::to_string(s.total_steps) + "]");
  if (s.lr_warmup_steps > 0 && t < s.lr_warmup_steps)
    return s.lr_peak * static_cast<double>(t) / s.lr_warmup_steps;
  const int64_t span = s.total_steps - s.lr_warmup_steps;
  if (span <= 0) return s.lr_peak;
  const double frac = static_cast<double>(t - s.lr_warmup_steps) / span;
  return s.lr_final +
         0.5 * (s.lr_peak - s.lr_final) * (1.0 + std::cos(M_PI * frac));
}

double lambda_at_step(int64_t t, const PruneSchedule& s) {
  if (t < 0) throw ScheduleError("lambda_at_step: negative step");
  if (s.lambda_warmup_steps <= 0) return s.lambda_target;
  const double frac =
      std::min(1.0, static_cast<double>(t) / s.lambda_warmup_steps);
  return s.lambda_target * frac;
}

}  // namespace headlab
