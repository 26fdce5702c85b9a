#include "tfbench/gradcheck.hpp"

#include <cmath>
#include <sstream>

#include "tfbench/errors.hpp"

namespace tfbench {

GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> wrt,
                                  const GradCheckOptions& options) {
  GradCheckReport report;
  for (auto& t : wrt) {
    if (!t.is_leaf()) throw ContractError("finite_diff_check needs leaf tensors");
    t.set_requires_grad(true);
    t.zero_grad();
  }

  Tensor loss = f();
  if (loss.numel() != 1) throw ContractError("finite_diff_check needs a scalar-valued function");
  loss.backward();

  bool ok = true;
  std::ostringstream detail;
  NoGradGuard no_grad;
  for (std::size_t w = 0; w < wrt.size(); ++w) {
    Tensor& t = wrt[w];
    const auto analytic = t.grad();
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = f().item();
      values[i] = saved - options.step;
      const double down = f().item();
      values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.oracle_failure = true;
        ok = false;
        detail << "non-finite evaluation at tensor " << w << " element " << i << "; ";
        continue;
      }
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[i];
      const double abs_err = std::abs(a - numeric);
      ++report.checked;
      if (std::abs(a) < options.abs_threshold) {
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        if (abs_err > options.abs_tol) {
          ok = false;
          detail << "tensor " << w << " element " << i << ": analytic " << a << " numeric " << numeric << "; ";
        }
      } else {
        const double rel = abs_err / std::max(std::abs(a), std::abs(numeric));
        report.max_rel_error = std::max(report.max_rel_error, rel);
        if (rel > options.rel_tol) {
          ok = false;
          detail << "tensor " << w << " element " << i << ": analytic " << a << " numeric " << numeric << "; ";
        }
      }
    }
  }
  report.passed = ok;
  report.detail = detail.str();
  return report;
}

GradCheckReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double tol) {
  Tensor leaf = x.detach();
  GradCheckOptions options;
  options.rel_tol = tol;
  return finite_diff_check([&] { return f(leaf); }, {leaf}, options);
}

}  // namespace tfbench
