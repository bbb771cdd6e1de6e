#pragma once

#include <vector>

namespace qkdvpp::controller {

struct RelaxOption {
    double weight = 1.0;  // omega_i, cost per relaxed bit
    double cap = 0.0;     // bits per slot
};

struct Relaxation {
    std::vector<double> zeta;
    double cost = 0.0;
    double relieved = 0.0;
};

// min sum w_i z_i  s.t.  sum z_i >= deficit, 0 <= z_i <= cap_i. Fills cheapest weights first, which is
// optimal for this separable LP. Throws RecoveryFailed when the caps cannot cover the deficit.
Relaxation recover_feasibility(double deficit_bits, const std::vector<RelaxOption>& options);
Relaxation recover_feasibility(const std::vector<double>& node_deficits, const std::vector<RelaxOption>& options);

}  // namespace qkdvpp::controller
