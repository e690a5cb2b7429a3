// Acceptance suite: runs every verification check at its pinned tolerance and
// prints one PASS/FAIL line per check. Nonzero exit on any failure.

#include <selfloop/checks.hpp>

#include <chrono>
#include <cstdio>

int main() {
  using Clock = std::chrono::steady_clock;
  bool all_pass = true;
  const auto t0 = Clock::now();

  int index = 0;
  for (auto check : {
           &selfloop::checks::exact_2d_example,
           &selfloop::checks::derivative_consistency,
           &selfloop::checks::sign_pattern,
           &selfloop::checks::convergence_protocol,
           &selfloop::checks::finite_sample_decay,
           &selfloop::checks::preference_selection_law,
           &selfloop::checks::stability_constants,
           &selfloop::checks::generalized_derivative_checks,
           &selfloop::checks::deviation_bound_check,
           &selfloop::checks::hue_reward_checks,
           &selfloop::checks::blockwise_checks,
       }) {
    const auto start = Clock::now();
    const auto result = check();
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("[%2d] %s  %-26s (%.2fs)  %s\n", ++index, result.pass ? "PASS" : "FAIL",
                result.name.c_str(), secs, result.detail.c_str());
    all_pass = all_pass && result.pass;
  }

  const double total = std::chrono::duration<double>(Clock::now() - t0).count();
  std::printf("%s in %.2fs\n", all_pass ? "all acceptance checks passed" : "ACCEPTANCE FAILURE",
              total);
  return all_pass ? 0 : 3;
}
