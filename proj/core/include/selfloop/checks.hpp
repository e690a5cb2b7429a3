#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace selfloop::checks {

struct CheckResult {
  std::string name;
  bool pass{false};
  std::string detail;
};

// The built-in verification suite. Each check pins its tolerances in code;
// all of them together form the acceptance gate run by the acceptance binary,
// and the CLI exposes named subsets as presets.

CheckResult exact_2d_example();              // 2-d counterexample: exact cosine, inner product, threshold
CheckResult derivative_consistency();        // influence formula vs closed form vs finite differences over t
CheckResult sign_pattern();                  // self/cross derivative signs at t = 0.2 and 0.9, with perturbation confirmation
CheckResult convergence_protocol();          // 100-iteration run: delta metric, tail mean, contraction rate
CheckResult finite_sample_decay();           // CI coverage and 1/sqrt(n) width decay for n = 4/12/64
CheckResult preference_selection_law();      // selection frequencies at rewards (0, ln 3)
CheckResult stability_constants();           // kappa and tau formula values, monotonicity
CheckResult generalized_derivative_checks(); // resize-proportion derivatives vs base formula and FD oracle
CheckResult deviation_bound_check();         // alignment gap vs bound over a real-fraction grid
CheckResult hue_reward_checks();             // band scores, hue shift, reward weights
CheckResult blockwise_checks();              // per-block sums and sign reversal

std::vector<CheckResult> run_all();

/// Named presets: "example46", "gaussian-ref", "kappa-tau".
/// Throws ValidationError for an unknown preset.
std::vector<CheckResult> run_preset(std::string_view preset);

std::vector<std::string> preset_names();

}  // namespace selfloop::checks
