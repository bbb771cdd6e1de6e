#pragma once

#include <string>
#include <vector>

namespace qkdvpp::metrics {

// Log-spaced histogram over [lo, hi) with under/overflow bins at the ends.
class LogHistogram {
public:
    explicit LogHistogram(double lo = 1e-4, double hi = 1e2, int per_decade = 50);

    void add(double x, double weight);
    // Adds weight * (S(edge_k) - S(edge_k+1)) to every bin, where S(x) = P(X > x) is nonincreasing.
    template <typename Survival>
    void add_survival(double start, double weight, Survival survival);

    double total() const { return total_; }
    double quantile(double q) const;
    void merge(const LogHistogram& other);

    int bins() const { return static_cast<int>(mass_.size()); }
    double edge(int k) const;  // lower edge of bin k (bin 0 is underflow)

private:
    int index(double x) const;

    double lo_;
    double hi_;
    int per_decade_;
    std::vector<double> mass_;
    double total_ = 0.0;
};

template <typename Survival>
void LogHistogram::add_survival(double start, double weight, Survival survival) {
    if (weight <= 0.0) return;
    int k = index(start);
    double s_prev = 1.0;
    double placed = 0.0;
    for (; k + 1 < bins(); ++k) {
        const double s = survival(edge(k + 1));
        const double m = weight * (s_prev - s);
        if (m > 0.0) {
            mass_[k] += m;
            placed += m;
        }
        s_prev = s;
        if (s <= 1e-15) break;
    }
    if (weight - placed > 0.0) mass_[std::min(k, bins() - 1)] += weight - placed;
    total_ += weight;
}

struct Interval {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    int n = 0;
    bool degenerate = false;  // fewer than two samples
};

// Student-t confidence interval for the mean.
Interval t_interval(const std::vector<double>& xs, double level = 0.95);

}  // namespace qkdvpp::metrics
