#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ameval/analysis.hpp"
#include "ameval/config.hpp"
#include "ameval/curves.hpp"

namespace ameval {

using json = nlohmann::json;

// Deterministic shortest round-trip formatting; report files must be
// byte-identical across reruns.
inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("report: cannot write " + path);
    out << content;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
    std::string content;
    for (size_t i = 0; i < header.size(); ++i) content += (i ? "," : "") + header[i];
    content += "\n";
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) content += (i ? "," : "") + row[i];
        content += "\n";
    }
    write_text_file(path, content);
}

inline void write_json_file(const std::string& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

inline void write_curve_csv(const std::string& path, const ProbabilityCurve& curve) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(curve.x.size());
    for (size_t i = 0; i < curve.x.size(); ++i)
        rows.push_back({fmt_double(curve.x[i]), fmt_double(curve.y[i])});
    write_csv(path, {"x", "y"}, rows);
}

inline json ranking_to_json(const RankingTable& t) {
    json rows = json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"method", r.method}, {"mean", r.mean}, {"std", r.stddev}});
    return {{"metric", t.metric},
            {"direction", t.direction == Direction::HigherBetter ? "higher" : "lower"},
            {"combo_id", t.combo_id},
            {"dataset_id", t.dataset_id},
            {"arch_id", t.arch_id},
            {"rows", rows}};
}

inline void write_ranking_csv(const std::string& path, const RankingTable& t) {
    std::vector<std::vector<std::string>> rows;
    for (size_t i = 0; i < t.rows.size(); ++i)
        rows.push_back({std::to_string(i + 1), t.rows[i].method, fmt_double(t.rows[i].mean),
                        fmt_double(t.rows[i].stddev)});
    write_csv(path, {"rank", "method", "mean", "std"}, rows);
}

inline json consistency_to_json(const ConsistencyMatrix& cm) {
    json matrix = json::array();
    const size_t n = cm.labels.size();
    for (size_t i = 0; i < n; ++i) {
        json row = json::array();
        for (size_t j = 0; j < n; ++j) row.push_back(cm.at(i, j));
        matrix.push_back(row);
    }
    return {{"labels", cm.labels},
            {"tau", matrix},
            {"mean_offdiag", cm.mean_offdiag},
            {"std_offdiag", cm.std_offdiag}};
}

// Matrix CSV with label headers (first column = row label).
inline void write_matrix_csv(const std::string& path, const std::vector<std::string>& labels,
                             const std::vector<double>& values) {
    std::vector<std::string> header = {"label"};
    header.insert(header.end(), labels.begin(), labels.end());
    std::vector<std::vector<std::string>> rows;
    const size_t n = labels.size();
    for (size_t i = 0; i < n; ++i) {
        std::vector<std::string> row = {labels[i]};
        for (size_t j = 0; j < n; ++j) row.push_back(fmt_double(values[i * n + j]));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

// Per-image record and per-metric exclusion accounting for the manifest.
struct ImageRecord {
    std::string combo_id;
    int image_id = 0;
    int label = 0;
    int clean_class = 0;
    double clean_probability = 0.0;
    bool attack_success = false;
    bool evaluated = false;  // false: misclassified or past eval_count
};

struct MetricAccounting {
    std::string combo_id;
    std::string metric;
    int images_in = 0;
    int images_scored = 0;
    int images_excluded = 0;
};

struct RunManifest {
    std::string config_hash;
    bool partial = false;
    std::string failed_stage;
    std::vector<std::string> artifacts;  // paths relative to out_dir
    std::vector<ImageRecord> images;
    std::vector<MetricAccounting> accounting;

    json to_json() const {
        json imgs = json::array();
        for (const auto& r : images)
            imgs.push_back({{"combo_id", r.combo_id},
                            {"image_id", r.image_id},
                            {"label", r.label},
                            {"clean_class", r.clean_class},
                            {"clean_probability", r.clean_probability},
                            {"attack_success", r.attack_success},
                            {"evaluated", r.evaluated}});
        json acc = json::array();
        for (const auto& a : accounting)
            acc.push_back({{"combo_id", a.combo_id},
                           {"metric", a.metric},
                           {"images_in", a.images_in},
                           {"images_scored", a.images_scored},
                           {"images_excluded", a.images_excluded}});
        json j = {{"config_hash", config_hash},
                  {"partial", partial},
                  {"artifacts", artifacts},
                  {"images", imgs},
                  {"accounting", acc}};
        if (partial) j["failed_stage"] = failed_stage;
        return j;
    }
};

}  // namespace ameval
