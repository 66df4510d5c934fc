#include "delaynet/grad_check.hpp"

#include <cmath>
#include <string>

namespace delaynet {

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
  const double v = f().item();
  if (!std::isfinite(v))
    throw numeric_error("grad_check: loss is not finite (" +
                        std::to_string(v) + ")");
  return v;
}

}  // namespace

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                  double h) {
  if (!(h >= 1e-7 && h <= 1e-3))
    throw config_error("grad_check: step size " + std::to_string(h) +
                       " outside [1e-7, 1e-3]");

  for (auto& p : params) p.zero_grad();
  Tensor loss = f();
  if (!std::isfinite(loss.item()))
    throw numeric_error("grad_check: loss is not finite");
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + h;
      const double up = eval_scalar(f);
      vals[i] = saved - h;
      const double down = eval_scalar(f);
      vals[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double ad = analytic[pi][i];
      const double denom = std::max({std::abs(ad), std::abs(fd), 1e-8});
      worst = std::max(worst, std::abs(ad - fd) / denom);
    }
  }
  return worst;
}

}  // namespace delaynet
