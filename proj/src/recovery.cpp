#include "qkdvpp/recovery.hpp"

#include <algorithm>
#include <numeric>

#include "qkdvpp/error.hpp"

namespace qkdvpp::controller {

Relaxation recover_feasibility(double deficit_bits, const std::vector<RelaxOption>& options) {
    Relaxation out;
    out.zeta.assign(options.size(), 0.0);
    if (deficit_bits <= 0.0) return out;
    std::vector<std::size_t> order(options.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return options[a].weight < options[b].weight; });
    double left = deficit_bits;
    for (std::size_t k : order) {
        if (left <= 0.0) break;
        const double z = std::min(left, std::max(0.0, options[k].cap));
        out.zeta[k] = z;
        out.cost += options[k].weight * z;
        left -= z;
    }
    if (left > 1e-9 * std::max(1.0, deficit_bits))
        throw Error(ErrorCode::RecoveryFailed, "recovery", "relaxation caps cannot cover the key deficit");
    out.relieved = deficit_bits;
    return out;
}

Relaxation recover_feasibility(const std::vector<double>& node_deficits, const std::vector<RelaxOption>& options) {
    double total = 0.0;
    for (double d : node_deficits) total += std::max(0.0, d);
    return recover_feasibility(total, options);
}

}  // namespace qkdvpp::controller
