// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include "tempseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tempseg/error.hpp"

namespace tempseg::tensor {

namespace {

class CheckGuard {
 public:
  CheckGuard() : finite_(check_finite_enabled()), kinks_(kink_monitor().enabled) {
    set_check_finite(true);
    kink_monitor().enabled = true;
  }
  ~CheckGuard() {
    set_check_finite(finite_);
    kink_monitor().enabled = kinks_;
  }

 private:
  bool finite_;
  bool kinks_;
};

struct Probe {
  double value;
  std::uint64_t fingerprint;
};

Probe evaluate(const ScalarFn& f, const std::vector<Tensor<double>>& inputs) {
  kink_monitor().reset();
  const double v = f(inputs).item();
  return {v, kink_monitor().fingerprint};
}

}  // namespace

GradcheckReport gradcheck(const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                          double eps) {
  CheckGuard guard;
  for (const auto& x : inputs) {
    if (!x.requires_grad()) throw InvalidArgument("gradcheck: inputs must be parameters");
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    for (auto x : inputs) x.zero_grad();
    kink_monitor().reset();
    Tensor<double> loss = f(inputs);
    tape.backward(loss);
    for (const auto& x : inputs) {
      if (x.has_grad()) {
        analytic.emplace_back(x.grad().begin(), x.grad().end());
      } else {
        analytic.emplace_back(x.size(), 0.0);
      }
    }
  }

  GradcheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor<double> x = inputs[i];
    auto data = x.mutable_data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double orig = data[j];
      data[j] = orig + eps;
      const Probe plus = evaluate(f, inputs);
      data[j] = orig - eps;
      const Probe minus = evaluate(f, inputs);
      data[j] = orig;
      if (plus.fingerprint != minus.fingerprint) {
        report.excluded.push_back({i, j});
        continue;
      }
      const double fd = (plus.value - minus.value) / (2.0 * eps);
      const double a = analytic[i][j];
      const double err = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_input = i;
        report.worst_index = j;
      }
    }
  }
  return report;
}

}  // namespace tempseg::tensor
