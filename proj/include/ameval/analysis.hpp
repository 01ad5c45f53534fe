#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ameval/attack.hpp"
#include "ameval/attribution.hpp"
#include "ameval/curves.hpp"
#include "ameval/dataset.hpp"
#include "ameval/stats.hpp"

namespace ameval {

// Rankings, their agreement across dataset-architecture combos, baseline
// sanity counts and the epsilon ablation. Everything here is a pure function
// of immutable score records; aggregation order is fixed by sorted keys.

struct RankingRow {
    std::string method;
    double mean = 0.0;
    double stddev = 0.0;
};

struct RankingTable {
    std::string metric;
    Direction direction = Direction::HigherBetter;
    std::string combo_id, dataset_id, arch_id;
    std::vector<RankingRow> rows;  // best first; mean ties broken by method name

    int rank_of(const std::string& method) const {
        for (size_t i = 0; i < rows.size(); ++i)
            if (rows[i].method == method) return static_cast<int>(i);
        throw std::invalid_argument("ranking: method '" + method + "' not present");
    }
};

inline RankingTable build_ranking(const std::string& metric, Direction direction,
                                  const std::map<std::string, std::vector<double>>& scores) {
    if (scores.empty()) throw std::invalid_argument("build_ranking: empty method set");
    RankingTable t;
    t.metric = metric;
    t.direction = direction;
    for (const auto& [method, vals] : scores) {
        if (vals.empty())
            throw std::invalid_argument("build_ranking: no scores for method '" + method + "'");
        t.rows.push_back({method, mean_of(vals), stddev_of(vals)});
    }
    std::sort(t.rows.begin(), t.rows.end(), [&](const RankingRow& a, const RankingRow& b) {
        if (a.mean != b.mean)
            return direction == Direction::HigherBetter ? a.mean > b.mean : a.mean < b.mean;
        return a.method < b.method;
    });
    return t;
}

namespace detail {

// Mean scores in canonical method order, oriented so that larger is better;
// the tau between two tables of the same metric is then direction-free.
inline std::vector<double> oriented_scores(const RankingTable& t,
                                           const std::vector<std::string>& methods) {
    std::vector<double> out;
    out.reserve(methods.size());
    for (const auto& m : methods) {
        const auto& row = t.rows[t.rank_of(m)];
        out.push_back(t.direction == Direction::HigherBetter ? row.mean : -row.mean);
    }
    return out;
}

inline std::vector<std::string> common_methods(const std::vector<RankingTable>& tables) {
    if (tables.empty()) throw std::invalid_argument("analysis: no ranking tables");
    std::vector<std::string> methods;
    for (const auto& row : tables[0].rows) methods.push_back(row.method);
    std::sort(methods.begin(), methods.end());
    for (const auto& t : tables) {
        if (t.rows.size() != methods.size())
            throw std::invalid_argument("analysis: tables rank different method sets");
        for (const auto& m : methods) t.rank_of(m);  // throws when missing
    }
    return methods;
}

}  // namespace detail

struct ConsistencyMatrix {
    std::vector<std::string> labels;
    std::vector<double> tau;  // row-major, labels.size() squared
    double mean_offdiag = 0.0;
    double std_offdiag = 0.0;

    double at(size_t i, size_t j) const { return tau[i * labels.size() + j]; }
};

// Pairwise Kendall tau between the rankings induced by each table (all for
// the same metric across dataset-architecture combos).
inline ConsistencyMatrix consistency_matrix(const std::vector<RankingTable>& tables) {
    const auto methods = detail::common_methods(tables);
    const size_t n = tables.size();
    ConsistencyMatrix cm;
    cm.labels.reserve(n);
    for (const auto& t : tables) cm.labels.push_back(t.combo_id);
    cm.tau.assign(n * n, 1.0);
    std::vector<std::vector<double>> scores(n);
    for (size_t i = 0; i < n; ++i) scores[i] = detail::oriented_scores(tables[i], methods);
    std::vector<double> offdiag;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            const double tau = kendall_tau(scores[i], scores[j]);
            cm.tau[i * n + j] = tau;
            cm.tau[j * n + i] = tau;
            offdiag.push_back(tau);
        }
    if (!offdiag.empty()) {
        cm.mean_offdiag = mean_of(offdiag);
        cm.std_offdiag = stddev_of(offdiag);
    }
    return cm;
}

struct SimilarityMatrix {
    std::vector<std::string> methods;
    std::vector<double> r;  // row-major mean Pearson
    int images_excluded = 0;

    double at(size_t i, size_t j) const { return r[i * methods.size() + j]; }
};

// Mean Pearson correlation between the maps of every method pair across an
// image set; images where the coefficient is undefined (a constant map) are
// excluded from that pair's mean and counted.
inline SimilarityMatrix similarity_matrix(
    const std::map<std::string, std::vector<AttributionMap>>& maps_by_method) {
    if (maps_by_method.empty()) throw std::invalid_argument("similarity_matrix: no methods");
    SimilarityMatrix sm;
    size_t image_count = maps_by_method.begin()->second.size();
    for (const auto& [name, maps] : maps_by_method) {
        if (maps.size() != image_count)
            throw std::invalid_argument("similarity_matrix: image sets differ between methods");
        sm.methods.push_back(name);
    }
    const size_t n = sm.methods.size();
    sm.r.assign(n * n, 1.0);
    for (size_t i = 0; i < n; ++i) {
        const auto& mi = maps_by_method.at(sm.methods[i]);
        for (size_t j = i + 1; j < n; ++j) {
            const auto& mj = maps_by_method.at(sm.methods[j]);
            double sum = 0.0;
            int used = 0;
            for (size_t img = 0; img < image_count; ++img) {
                const auto r = pearson(mi[img].values, mj[img].values);
                if (r) {
                    sum += *r;
                    ++used;
                } else {
                    ++sm.images_excluded;
                }
            }
            const double v = used > 0 ? sum / used : std::nan("");
            sm.r[i * n + j] = v;
            sm.r[j * n + i] = v;
        }
    }
    return sm;
}

struct SanityCounts {
    int tables = 0;
    int uniform_last = 0;
    int canny_second_last = 0;
};

// Table-2 style check: a sound metric should put the uniform baseline last
// and the Canny baseline second to last.
inline SanityCounts baseline_sanity_check(const std::vector<RankingTable>& tables) {
    SanityCounts counts;
    counts.tables = static_cast<int>(tables.size());
    for (const auto& t : tables) {
        const int n = static_cast<int>(t.rows.size());
        if (n < 2) throw std::invalid_argument("baseline_sanity_check: table too small");
        const int u = t.rank_of("uniform");  // throws when baselines are missing
        const int c = t.rank_of("canny");
        if (u == n - 1) ++counts.uniform_last;
        if (c == n - 2) ++counts.canny_second_last;
    }
    return counts;
}

struct DatasetTopK {
    std::string dataset_id;
    std::vector<RankingRow> top;  // averaged across architectures, best first
};

inline std::vector<DatasetTopK> top_k_summary(const std::vector<RankingTable>& tables, int k) {
    const auto methods = detail::common_methods(tables);
    if (k < 1 || k > static_cast<int>(methods.size()))
        throw std::invalid_argument("top_k_summary: k must be in [1, method count]");
    std::map<std::string, std::vector<const RankingTable*>> by_dataset;
    for (const auto& t : tables) by_dataset[t.dataset_id].push_back(&t);
    const Direction dir = tables[0].direction;
    std::vector<DatasetTopK> out;
    for (const auto& [dataset, group] : by_dataset) {
        std::vector<RankingRow> rows;
        for (const auto& m : methods) {
            std::vector<double> means;
            for (const auto* t : group) means.push_back(t->rows[t->rank_of(m)].mean);
            rows.push_back({m, mean_of(means), stddev_of(means)});
        }
        std::sort(rows.begin(), rows.end(), [&](const RankingRow& a, const RankingRow& b) {
            if (a.mean != b.mean)
                return dir == Direction::HigherBetter ? a.mean > b.mean : a.mean < b.mean;
            return a.method < b.method;
        });
        rows.resize(k);
        out.push_back({dataset, std::move(rows)});
    }
    return out;
}

struct CurveQuality {
    double monotonicity = 0.0;
    double smoothness = 0.0;
    Direction direction = Direction::HigherBetter;
};

inline CurveQuality curve_quality(const ProbabilityCurve& curve, Direction expected) {
    return {monotonicity(curve.y, expected), smoothness(curve.y), expected};
}

struct SweepRecord {
    int eps_steps = 0;
    int images_used = 0;
    int images_excluded = 0;
    double mean_monotonicity = std::nan("");
    double mean_smoothness = std::nan("");
};

// FGSM strength ablation: per budget k, attack every correctly classified
// image, compute the perturbation curve with the given attribution method
// and aggregate monotonicity/smoothness. Failed attacks and misclassified
// images are excluded and counted.
inline std::vector<SweepRecord> epsilon_sweep(const Model& m, const Dataset& images,
                                              const MethodFn& method, uint64_t method_seed,
                                              const std::vector<int>& k_values, int steps) {
    std::vector<SweepRecord> out;
    for (int k : k_values) {
        if (k < 1 || k > 255) throw std::invalid_argument("epsilon_sweep: k must be in {1,...,255}");
        SweepRecord rec;
        rec.eps_steps = k;
        std::vector<double> monos, smooths;
        for (size_t idx = 0; idx < images.items.size(); ++idx) {
            const auto& item = images.items[idx];
            const auto clean = forward(m, to_tensor(item.image));
            if (argmax_class(clean.probabilities()) != item.label) {
                ++rec.images_excluded;
                continue;
            }
            AttackBudget budget;
            budget.eps_steps = k;
            budget.iterations = 1;
            budget.target = {item.label, clean.probabilities().data[item.label]};
            const auto attack = fgsm(m, item.image, budget);
            if (!attack.success) {
                ++rec.images_excluded;
                continue;
            }
            MethodRequest req;
            const Tensor img = to_tensor(item.image);
            req.model = &m;
            req.image = &img;
            req.klass = item.label;
            req.seed = method_seed;
            req.image_id = idx;
            const AttributionMap map = method(req);
            const auto curve = perturbation_curve(m, item.image, attack, map, steps, item.label);
            monos.push_back(monotonicity(curve.y, Direction::HigherBetter));
            smooths.push_back(smoothness(curve.y));
        }
        rec.images_used = static_cast<int>(monos.size());
        if (!monos.empty()) {
            rec.mean_monotonicity = mean_of(monos);
            rec.mean_smoothness = mean_of(smooths);
        }
        out.push_back(rec);
    }
    return out;
}

}  // namespace ameval
