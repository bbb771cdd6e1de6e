#include "qkdvpp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

namespace qkdvpp::metrics {

LogHistogram::LogHistogram(double lo, double hi, int per_decade) : lo_(lo), hi_(hi), per_decade_(per_decade) {
    const int inner = static_cast<int>(std::ceil(std::log10(hi / lo) * per_decade));
    mass_.assign(inner + 2, 0.0);
}

double LogHistogram::edge(int k) const {
    if (k <= 0) return 0.0;
    if (k >= bins() - 1) return hi_;
    return lo_ * std::pow(10.0, static_cast<double>(k - 1) / per_decade_);
}

int LogHistogram::index(double x) const {
    if (!(x >= lo_)) return 0;
    if (x >= hi_) return bins() - 1;
    const int k = 1 + static_cast<int>(std::floor(std::log10(x / lo_) * per_decade_));
    return std::clamp(k, 1, bins() - 2);
}

void LogHistogram::add(double x, double weight) {
    if (weight <= 0.0) return;
    mass_[index(x)] += weight;
    total_ += weight;
}

double LogHistogram::quantile(double q) const {
    if (total_ <= 0.0) return 0.0;
    const double target = q * total_;
    double cum = 0.0;
    for (int k = 0; k < bins(); ++k) {
        if (mass_[k] <= 0.0) continue;
        if (cum + mass_[k] >= target) {
            if (k == 0) return lo_;
            if (k == bins() - 1) return hi_;
            const double f = std::clamp((target - cum) / mass_[k], 0.0, 1.0);
            return edge(k) * std::pow(10.0, f / per_decade_);
        }
        cum += mass_[k];
    }
    return hi_;
}

void LogHistogram::merge(const LogHistogram& other) {
    for (int k = 0; k < bins() && k < other.bins(); ++k) mass_[k] += other.mass_[k];
    total_ += other.total_;
}

Interval t_interval(const std::vector<double>& xs, double level) {
    Interval out;
    out.n = static_cast<int>(xs.size());
    if (xs.empty()) {
        out.degenerate = true;
        return out;
    }
    out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / out.n;
    if (out.n < 2) {
        out.lo = out.hi = out.mean;
        out.degenerate = true;
        return out;
    }
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    const double sd = std::sqrt(ss / (out.n - 1));
    const boost::math::students_t dist(out.n - 1);
    const double t = boost::math::quantile(boost::math::complement(dist, (1.0 - level) / 2.0));
    const double half = t * sd / std::sqrt(static_cast<double>(out.n));
    out.lo = out.mean - half;
    out.hi = out.mean + half;
    return out;
}

}  // namespace qkdvpp::metrics
