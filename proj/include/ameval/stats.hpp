#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace ameval {

enum class Direction { HigherBetter, LowerBetter };

// Pearson correlation; nullopt when either argument has zero variance (the
// coefficient is undefined there and callers count such cases explicitly).
inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 samples");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

// Kendall tau-b via Knight's O(n log n) algorithm: sort by x, then count
// discordant pairs as merge-sort inversions on y, with tie corrections.
inline double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("kendall_tau: length mismatch");
    const size_t n = x.size();
    if (n < 2) throw std::invalid_argument("kendall_tau: need at least 2 items");

    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        if (x[a] != x[b]) return x[a] < x[b];
        return y[a] < y[b];
    });

    auto pair_count = [](size_t t) { return static_cast<double>(t) * (t - 1) / 2.0; };

    // tie counts in x, in y-within-x-groups (joint ties)
    double xtie = 0.0, xytie = 0.0;
    for (size_t i = 0; i < n;) {
        size_t j = i;
        while (j < n && x[idx[j]] == x[idx[i]]) ++j;
        xtie += pair_count(j - i);
        for (size_t a = i; a < j;) {
            size_t b = a;
            while (b < j && y[idx[b]] == y[idx[a]]) ++b;
            xytie += pair_count(b - a);
            a = b;
        }
        i = j;
    }

    // inversions on y (merge sort)
    std::vector<double> ys(n);
    for (size_t i = 0; i < n; ++i) ys[i] = y[idx[i]];
    std::vector<double> buf(n);
    double discordant = 0.0;
    for (size_t width = 1; width < n; width *= 2) {
        for (size_t lo = 0; lo + width < n; lo += 2 * width) {
            const size_t mid = lo + width, hi = std::min(lo + 2 * width, n);
            size_t a = lo, b = mid, o = lo;
            while (a < mid && b < hi) {
                if (ys[b] < ys[a]) {
                    discordant += static_cast<double>(mid - a);
                    buf[o++] = ys[b++];
                } else {
                    buf[o++] = ys[a++];
                }
            }
            while (a < mid) buf[o++] = ys[a++];
            while (b < hi) buf[o++] = ys[b++];
            std::copy(buf.begin() + lo, buf.begin() + hi, ys.begin() + lo);
        }
    }

    double ytie = 0.0;
    {
        std::vector<double> sorted_y = y;
        std::sort(sorted_y.begin(), sorted_y.end());
        for (size_t i = 0; i < n;) {
            size_t j = i;
            while (j < n && sorted_y[j] == sorted_y[i]) ++j;
            ytie += pair_count(j - i);
            i = j;
        }
    }

    const double total = pair_count(n);
    const double denom = std::sqrt((total - xtie) * (total - ytie));
    if (denom == 0.0) throw std::domain_error("kendall_tau: an argument is constant");
    const double con_minus_dis = total - xtie - ytie + xytie - 2.0 * discordant;
    return con_minus_dis / denom;
}

// Fraction of curve steps moving in the expected direction; equality counts
// as monotone. HigherBetter expects increase, LowerBetter expects decrease.
inline double monotonicity(const std::vector<double>& y, Direction expected) {
    if (y.size() < 2) throw std::invalid_argument("monotonicity: need at least 2 points");
    size_t good = 0;
    for (size_t i = 0; i + 1 < y.size(); ++i) {
        if (expected == Direction::HigherBetter ? y[i + 1] >= y[i] : y[i + 1] <= y[i]) ++good;
    }
    return static_cast<double>(good) / static_cast<double>(y.size() - 1);
}

// Fluctuation of a curve: sqrt of centered sum of squares of the forward
// differences, scaled by 1/(number of differences). Zero for constant and
// exactly linear curves.
inline double smoothness(const std::vector<double>& y) {
    if (y.size() < 3) throw std::invalid_argument("smoothness: need at least 3 points");
    const size_t d = y.size() - 1;
    double mean = 0.0;
    for (size_t i = 0; i < d; ++i) mean += y[i + 1] - y[i];
    mean /= static_cast<double>(d);
    double ss = 0.0;
    for (size_t i = 0; i < d; ++i) {
        const double dev = (y[i + 1] - y[i]) - mean;
        ss += dev * dev;
    }
    return std::sqrt(ss) / static_cast<double>(d);
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean: empty");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for a single observation.
inline double stddev_of(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("stddev: empty");
    if (v.size() == 1) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace ameval
