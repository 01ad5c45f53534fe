#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ameval/analysis.hpp"
#include "ameval/attack.hpp"
#include "ameval/attribution.hpp"
#include "ameval/config.hpp"
#include "ameval/curves.hpp"
#include "ameval/dataset.hpp"
#include "ameval/model_io.hpp"
#include "ameval/report.hpp"
#include "ameval/scalar_metrics.hpp"
#include "ameval/threadpool.hpp"
#include "ameval/train.hpp"

namespace ameval {

// End-to-end experiment: train one model per (architecture, dataset variant)
// combo, compute attribution maps for every registered method, attack, score
// all metrics, and emit rankings, consistency matrices, sanity counts, curve
// quality and the epsilon sweep. Deterministic byte-for-byte per config.

struct ScoreRecord {
    int image_id = 0;
    std::string method;
    std::string metric;
    double value = 0.0;
    Direction direction = Direction::HigherBetter;
};

inline Direction any_metric_direction(const std::string& metric) {
    if (metric == "ad" || metric == "cp") return Direction::LowerBetter;
    if (metric == "iic" || metric == "ch" || metric == "adcc") return Direction::HigherBetter;
    return metric_direction(metric);
}

namespace detail {

struct Emitter {
    std::string out_dir;
    std::vector<std::string>* artifacts;

    std::string abs(const std::string& rel) const { return out_dir + "/" + rel; }
    void record(const std::string& rel) { artifacts->push_back(rel); }

    void json_file(const std::string& rel, const json& j) {
        write_json_file(abs(rel), j);
        record(rel);
    }
    void csv(const std::string& rel, const std::vector<std::string>& header,
             const std::vector<std::vector<std::string>>& rows) {
        write_csv(abs(rel), header, rows);
        record(rel);
    }
    void curve(const std::string& rel, const ProbabilityCurve& c) {
        write_curve_csv(abs(rel), c);
        record(rel);
    }
    void text(const std::string& rel, const std::string& content) {
        write_text_file(abs(rel), content);
        record(rel);
    }
};

struct ComboSpec {
    std::string combo_id, dataset_id, arch_id;
    ShapesParams train_params, test_params;  // synthetic only
};

struct CurveStat {
    std::string metric, method;
    double auc = 0.0, mono = 0.0, smooth = 0.0;
};

struct PerImageEval {
    int image_id = 0;
    double clean_prob = 0.0;
    bool fgsm_success = false;
    bool pgd_success = false;
    bool main_success = false;
    std::vector<CurveStat> curve_stats;                    // main attack for perturb
    std::vector<ScoreRecord> scalar_scores;                // ad/iic/cp/ch/adcc
    std::map<std::string, double> perturb_fgsm, perturb_pgd;  // method -> auc
    std::vector<std::pair<std::string, ProbabilityCurve>> sample_curves;
};

struct ComboResult {
    ComboSpec spec;
    TrainReport train_report;
    double fgsm_rate = 0.0, pgd_rate = 0.0;
    int images_considered = 0, images_evaluated = 0, attack_successes = 0;
    std::map<std::string, RankingTable> rankings;  // by metric
    std::map<std::string, std::vector<double>> mono_pool, smooth_pool;
    std::map<std::string, std::pair<int, int>> scored_excluded;  // metric -> counts
    std::map<std::string, std::vector<double>> perturb_fgsm_scores, perturb_pgd_scores;
    std::vector<ScoreRecord> scores;
    std::vector<ImageRecord> image_records;
};

inline Dataset make_variant_dataset(const ExperimentConfig& cfg, int variant, bool test) {
    ShapesParams p;
    p.count = test ? cfg.test_count : cfg.train_count;
    p.size = cfg.image_size;
    p.noise = cfg.noise + cfg.noise_variant_step * variant;
    p.background = cfg.background;
    p.background_jitter = cfg.background_jitter;
    p.min_radius_frac = cfg.shape_min_radius;
    p.max_radius_frac = cfg.shape_max_radius;
    p.min_intensity = cfg.shape_min_intensity;
    p.max_intensity = cfg.shape_max_intensity;
    p.seed = derive_seed(cfg.seed, test ? 0xD7E5Cu : 0xD7124u, static_cast<uint64_t>(variant));
    return generate_shapes(p);
}

inline PerImageEval evaluate_image(const ExperimentConfig& cfg, const Model& model,
                                   const MethodRegistry& registry, const LabeledImage& item,
                                   int image_id, double clean_prob, bool want_samples) {
    PerImageEval out;
    out.image_id = image_id;
    out.clean_prob = clean_prob;
    const Tensor image = to_tensor(item.image);
    const int klass = item.label;

    std::map<std::string, AttributionMap> maps;
    for (const auto& name : cfg.methods) {
        MethodRequest req;
        req.model = &model;
        req.image = &image;
        req.klass = klass;
        req.seed = cfg.seed;
        req.image_id = static_cast<uint64_t>(image_id);
        maps.emplace(name, registry.run(name, req));
    }

    AttackBudget fgsm_budget{cfg.eps_steps, 1, {klass, clean_prob}};
    const AttackResult fgsm_res = fgsm(model, item.image, fgsm_budget);
    out.fgsm_success = fgsm_res.success;

    const bool need_pgd = cfg.attack == "pgd" || cfg.compare_pgd;
    AttackResult pgd_res;
    if (need_pgd) {
        AttackBudget pgd_budget{cfg.eps_steps, cfg.pgd_iters, {klass, clean_prob}};
        pgd_res = pgd(model, item.image, pgd_budget);
        out.pgd_success = pgd_res.success;
    }
    const AttackResult& main_attack = cfg.attack == "pgd" ? pgd_res : fgsm_res;
    out.main_success = main_attack.success;

    for (const auto& metric : cfg.metrics) {
        const Direction dir = metric_direction(metric);
        for (const auto& name : cfg.methods) {
            const AttributionMap& map = maps.at(name);
            ProbabilityCurve curve;
            if (metric == "del") {
                curve = deletion_curve(model, item.image, map, cfg.steps, klass);
            } else if (metric == "ins") {
                curve = insertion_curve(model, item.image, map, cfg.steps, klass);
            } else if (metric == "insblur") {
                curve = insertion_blur_curve(model, item.image, map, cfg.steps, klass,
                                             cfg.insblur_sigma);
            } else {  // perturb
                if (!main_attack.success) continue;
                curve = perturbation_curve(model, item.image, main_attack, map, cfg.steps, klass);
            }
            CurveStat stat;
            stat.metric = metric;
            stat.method = name;
            stat.auc = auc(curve);
            stat.mono = monotonicity(curve.y, dir);
            stat.smooth = smoothness(curve.y);
            out.curve_stats.push_back(stat);
            if (want_samples) out.sample_curves.push_back({metric + "_" + name, curve});
        }
    }

    if (cfg.compare_pgd) {
        for (const auto& name : cfg.methods) {
            const AttributionMap& map = maps.at(name);
            if (fgsm_res.success)
                out.perturb_fgsm[name] =
                    auc(perturbation_curve(model, item.image, fgsm_res, map, cfg.steps, klass));
            if (pgd_res.success)
                out.perturb_pgd[name] =
                    auc(perturbation_curve(model, item.image, pgd_res, map, cfg.steps, klass));
        }
    } else if (cfg.attack == "fgsm") {
        for (const auto& [name, map] : maps)
            if (fgsm_res.success)
                out.perturb_fgsm[name] =
                    auc(perturbation_curve(model, item.image, fgsm_res, map, cfg.steps, klass));
    }

    if (cfg.scalar_metrics) {
        for (const auto& name : cfg.methods) {
            const AttributionMap& map = maps.at(name);
            const double ad = average_drop(model, image, map, klass);
            const int iic = increase_in_confidence(model, image, map, klass);
            const double cp = complexity(normalize_map(map));
            auto rerun = [&](const Tensor& t) {
                MethodRequest req;
                req.model = &model;
                req.image = &t;
                req.klass = klass;
                req.seed = cfg.seed;
                req.image_id = static_cast<uint64_t>(image_id);
                return registry.run(name, req);
            };
            const double ch = coherency(image, map, rerun);
            out.scalar_scores.push_back({image_id, name, "ad", ad, Direction::LowerBetter});
            out.scalar_scores.push_back(
                {image_id, name, "iic", static_cast<double>(iic), Direction::HigherBetter});
            out.scalar_scores.push_back({image_id, name, "cp", cp, Direction::LowerBetter});
            out.scalar_scores.push_back({image_id, name, "ch", ch, Direction::HigherBetter});
            if (ch > 0.0 && cp < 1.0 && ad < 1.0)
                out.scalar_scores.push_back(
                    {image_id, name, "adcc", adcc(ad, cp, ch), Direction::HigherBetter});
        }
    }
    return out;
}

inline ComboResult run_combo(const ExperimentConfig& cfg, const ComboSpec& spec,
                             const Dataset& train_set, const Dataset& test_set, Model& model,
                             Emitter& emit) {
    ComboResult res;
    res.spec = spec;

    // train
    TrainConfig tc;
    tc.learning_rate = cfg.train_lr;
    tc.epochs = cfg.train_epochs;
    tc.batch_size = cfg.train_batch;
    tc.init_scale = cfg.train_init_scale;
    tc.label_smoothing = cfg.train_label_smoothing;
    tc.seed = derive_seed(cfg.seed, hash_string(spec.combo_id), 0x7121u);
    res.train_report = train(model, train_set, test_set, tc);
    std::filesystem::create_directories(emit.abs("combos/" + spec.combo_id));
    save_model(model, emit.abs("combos/" + spec.combo_id + "/model.bin"));
    emit.record("combos/" + spec.combo_id + "/model.bin");

    // attack success rates over the whole test set
    {
        int fgsm_ok = 0, pgd_ok = 0;
        for (const auto& item : test_set.items) {
            const auto pass = forward(model, to_tensor(item.image));
            const double p = pass.probabilities().data[item.label];
            AttackBudget fb{cfg.eps_steps, 1, {item.label, p}};
            fgsm_ok += fgsm(model, item.image, fb).success;
            AttackBudget pb{cfg.eps_steps, cfg.pgd_iters, {item.label, p}};
            pgd_ok += pgd(model, item.image, pb).success;
        }
        res.fgsm_rate = static_cast<double>(fgsm_ok) / test_set.items.size();
        res.pgd_rate = static_cast<double>(pgd_ok) / test_set.items.size();
    }

    // eligibility scan: first eval_count correctly classified test images
    struct Eligible {
        int image_id;
        double clean_prob;
    };
    std::vector<Eligible> eval_list;
    for (size_t i = 0; i < test_set.items.size() &&
                       eval_list.size() < static_cast<size_t>(cfg.eval_count);
         ++i) {
        ++res.images_considered;
        const auto& item = test_set.items[i];
        const auto pass = forward(model, to_tensor(item.image));
        const int pred = argmax_class(pass.probabilities());
        const double prob = pass.probabilities().data[item.label];
        ImageRecord rec;
        rec.combo_id = spec.combo_id;
        rec.image_id = static_cast<int>(i);
        rec.label = item.label;
        rec.clean_class = pred;
        rec.clean_probability = prob;
        if (pred == item.label) {
            eval_list.push_back({static_cast<int>(i), prob});
            rec.evaluated = true;
        }
        res.image_records.push_back(rec);
    }
    res.images_evaluated = static_cast<int>(eval_list.size());

    const MethodRegistry registry = MethodRegistry::standard(cfg.method_params);
    std::vector<PerImageEval> evals(eval_list.size());
    parallel_for(eval_list.size(), cfg.threads, [&](size_t i) {
        const auto& e = eval_list[i];
        evals[i] = evaluate_image(cfg, model, registry, test_set.items[e.image_id], e.image_id,
                                  e.clean_prob, static_cast<int>(i) < cfg.emit_curves);
    });

    // aggregate
    std::map<std::string, std::map<std::string, std::vector<double>>> by_metric_method;
    for (size_t i = 0; i < evals.size(); ++i) {
        const auto& ev = evals[i];
        res.attack_successes += ev.main_success;
        for (auto& rec : res.image_records)
            if (rec.image_id == ev.image_id) rec.attack_success = ev.main_success;
        for (const auto& stat : ev.curve_stats) {
            by_metric_method[stat.metric][stat.method].push_back(stat.auc);
            res.mono_pool[stat.metric].push_back(stat.mono);
            res.smooth_pool[stat.metric].push_back(stat.smooth);
            res.scores.push_back({ev.image_id, stat.method, stat.metric, stat.auc,
                                  metric_direction(stat.metric)});
        }
        for (const auto& s : ev.scalar_scores) {
            by_metric_method[s.metric][s.method].push_back(s.value);
            res.scores.push_back(s);
        }
        for (const auto& [method, value] : ev.perturb_fgsm)
            res.perturb_fgsm_scores[method].push_back(value);
        for (const auto& [method, value] : ev.perturb_pgd)
            res.perturb_pgd_scores[method].push_back(value);
        for (const auto& [tag, curve] : ev.sample_curves)
            emit.curve("combos/" + spec.combo_id + "/curves/" + tag + "_img" +
                           std::to_string(ev.image_id) + ".csv",
                       curve);
    }
    for (const auto& [metric, per_method] : by_metric_method) {
        RankingTable t = build_ranking(metric, any_metric_direction(metric), per_method);
        t.combo_id = spec.combo_id;
        t.dataset_id = spec.dataset_id;
        t.arch_id = spec.arch_id;
        res.rankings[metric] = std::move(t);
    }

    // per-metric exclusion accounting over considered images
    for (const auto& metric : cfg.metrics) {
        int scored;
        if (metric == "perturb")
            scored = res.attack_successes;
        else
            scored = res.images_evaluated;
        res.scored_excluded[metric] = {scored, res.images_considered - scored};
    }

    // combo artifacts
    json scores_json = json::array();
    for (const auto& s : res.scores)
        scores_json.push_back({{"image_id", s.image_id},
                               {"method", s.method},
                               {"metric", s.metric},
                               {"value", s.value},
                               {"direction", s.direction == Direction::HigherBetter ? "higher" : "lower"}});
    emit.json_file("combos/" + spec.combo_id + "/scores.json",
                   {{"combo_id", spec.combo_id},
                    {"dataset_id", spec.dataset_id},
                    {"arch_id", spec.arch_id},
                    {"records", scores_json}});
    json rankings_json = json::object();
    for (const auto& [metric, table] : res.rankings) {
        rankings_json[metric] = ranking_to_json(table);
        write_ranking_csv(emit.abs("combos/" + spec.combo_id + "/ranking_" + metric + ".csv"), table);
        emit.record("combos/" + spec.combo_id + "/ranking_" + metric + ".csv");
    }
    emit.json_file("combos/" + spec.combo_id + "/rankings.json", rankings_json);
    emit.json_file("combos/" + spec.combo_id + "/train.json",
                   {{"combo_id", spec.combo_id},
                    {"train_accuracy", res.train_report.train_accuracy},
                    {"test_accuracy", res.train_report.test_accuracy},
                    {"final_loss", res.train_report.final_loss},
                    {"epochs", res.train_report.epochs},
                    {"fgsm_success_rate", res.fgsm_rate},
                    {"pgd_success_rate", res.pgd_rate}});
    return res;
}

}  // namespace detail

inline RunManifest run_pipeline(const ExperimentConfig& cfg) {
    if (cfg.out_dir.empty()) throw ConfigError("pipeline: out_dir is required");
    std::filesystem::create_directories(cfg.out_dir);

    RunManifest manifest;
    manifest.config_hash = config_hash(cfg);
    detail::Emitter emit{cfg.out_dir, &manifest.artifacts};

    std::string stage = "setup";
    try {
        {
            std::string canon;
            for (const auto& [k, v] : cfg.canonical_kv()) canon += k + " = " + v + "\n";
            emit.text("config_canonical.txt", canon);
        }

        // combos = archs x dataset variants
        stage = "dataset";
        struct ComboData {
            detail::ComboSpec spec;
            const Dataset* train;
            const Dataset* test;
        };
        std::vector<Dataset> datasets;  // stable storage
        std::vector<ComboData> combos;
        const int variant_count = cfg.dataset == "idx" ? 1 : cfg.variants;
        datasets.reserve(2 * variant_count);
        std::vector<std::pair<const Dataset*, const Dataset*>> variant_sets;
        for (int v = 0; v < variant_count; ++v) {
            if (cfg.dataset == "idx") {
                Dataset full = load_idx_dataset(cfg.idx_images, cfg.idx_labels);
                const size_t test_n = std::min<size_t>(cfg.test_count, full.items.size() / 4);
                Dataset test;
                test.num_classes = full.num_classes;
                test.items.assign(full.items.end() - test_n, full.items.end());
                full.items.resize(full.items.size() - test_n);
                datasets.push_back(std::move(full));
                datasets.push_back(std::move(test));
            } else {
                datasets.push_back(detail::make_variant_dataset(cfg, v, false));
                datasets.push_back(detail::make_variant_dataset(cfg, v, true));
            }
            variant_sets.push_back({&datasets[datasets.size() - 2], &datasets.back()});
        }
        for (const auto& arch : cfg.archs)
            for (int v = 0; v < variant_count; ++v) {
                detail::ComboSpec spec;
                spec.dataset_id = cfg.dataset == "idx" ? "idx" : std::string("shapes") + char('a' + v);
                spec.arch_id = arch;
                spec.combo_id = arch + "_" + spec.dataset_id;
                combos.push_back({spec, variant_sets[v].first, variant_sets[v].second});
            }

        std::vector<detail::ComboResult> results;
        std::vector<Model> models;
        models.reserve(combos.size());
        for (auto& combo : combos) {
            stage = "combo:" + combo.spec.combo_id;
            const int classes = combo.train->num_classes;
            Model model = parse_arch(arch_preset(combo.spec.arch_id, classes),
                                     {combo.train->items[0].image.channels,
                                      combo.train->items[0].image.height,
                                      combo.train->items[0].image.width});
            results.push_back(
                detail::run_combo(cfg, combo.spec, *combo.train, *combo.test, model, emit));
            models.push_back(std::move(model));
            manifest.images.insert(manifest.images.end(), results.back().image_records.begin(),
                                   results.back().image_records.end());
            for (const auto& [metric, counts] : results.back().scored_excluded)
                manifest.accounting.push_back({combo.spec.combo_id, metric,
                                               results.back().images_considered, counts.first,
                                               counts.second});
        }

        // consistency + sanity + quality + top-k across combos
        stage = "analysis";
        json quality = json::object();
        for (const auto& metric : cfg.metrics) {
            std::vector<RankingTable> tables;
            for (const auto& r : results)
                if (r.rankings.count(metric)) tables.push_back(r.rankings.at(metric));
            if (tables.size() >= 2) {
                const auto cm = consistency_matrix(tables);
                emit.json_file("analysis/consistency_" + metric + ".json", consistency_to_json(cm));
                write_matrix_csv(emit.abs("analysis/consistency_" + metric + ".csv"), cm.labels,
                                 cm.tau);
                emit.record("analysis/consistency_" + metric + ".csv");
            }
            std::vector<double> mono_all, smooth_all;
            for (const auto& r : results) {
                if (r.mono_pool.count(metric)) {
                    const auto& mp = r.mono_pool.at(metric);
                    mono_all.insert(mono_all.end(), mp.begin(), mp.end());
                    const auto& sp = r.smooth_pool.at(metric);
                    smooth_all.insert(smooth_all.end(), sp.begin(), sp.end());
                }
            }
            if (!mono_all.empty())
                quality[metric] = {{"mean_monotonicity", mean_of(mono_all)},
                                   {"mean_smoothness", mean_of(smooth_all)},
                                   {"curves", mono_all.size()}};
        }
        emit.json_file("analysis/quality.json", quality);

        {
            json sanity = json::object();
            std::vector<std::vector<std::string>> rows;
            for (const auto& metric : cfg.metrics) {
                std::vector<RankingTable> tables;
                for (const auto& r : results)
                    if (r.rankings.count(metric)) tables.push_back(r.rankings.at(metric));
                if (tables.empty() || !(tables[0].rows.size() >= 2)) continue;
                bool have_baselines = true;
                for (const auto& t : tables) {
                    try {
                        t.rank_of("uniform");
                        t.rank_of("canny");
                    } catch (const std::exception&) {
                        have_baselines = false;
                    }
                }
                if (!have_baselines) continue;
                const auto counts = baseline_sanity_check(tables);
                sanity[metric] = {{"tables", counts.tables},
                                  {"uniform_last", counts.uniform_last},
                                  {"canny_second_last", counts.canny_second_last}};
                rows.push_back({metric, std::to_string(counts.canny_second_last),
                                std::to_string(counts.uniform_last),
                                std::to_string(counts.tables)});
            }
            emit.json_file("analysis/sanity.json", sanity);
            emit.csv("analysis/sanity.csv", {"metric", "canny_second_last", "uniform_last", "tables"},
                     rows);
        }

        if (results.size() >= 2) {
            json topk = json::object();
            for (const auto& metric : cfg.metrics) {
                std::vector<RankingTable> tables;
                for (const auto& r : results)
                    if (r.rankings.count(metric)) tables.push_back(r.rankings.at(metric));
                if (tables.empty() || static_cast<int>(tables[0].rows.size()) < cfg.top_k) continue;
                json per_dataset = json::object();
                for (const auto& dt : top_k_summary(tables, cfg.top_k)) {
                    json rows = json::array();
                    for (const auto& row : dt.top)
                        rows.push_back({{"method", row.method}, {"mean", row.mean}});
                    per_dataset[dt.dataset_id] = rows;
                }
                topk[metric] = per_dataset;
            }
            emit.json_file("analysis/top" + std::to_string(cfg.top_k) + ".json", topk);
        }

        // attack rates + FGSM/PGD perturb ranking comparison (pooled scores)
        {
            json rates = json::array();
            for (const auto& r : results)
                rates.push_back({{"combo_id", r.spec.combo_id},
                                 {"fgsm_success_rate", r.fgsm_rate},
                                 {"pgd_success_rate", r.pgd_rate}});
            json cmp = {{"enabled", cfg.compare_pgd}};
            if (cfg.compare_pgd) {
                std::map<std::string, std::vector<double>> fgsm_pool, pgd_pool;
                for (const auto& r : results) {
                    for (const auto& [m, v] : r.perturb_fgsm_scores)
                        fgsm_pool[m].insert(fgsm_pool[m].end(), v.begin(), v.end());
                    for (const auto& [m, v] : r.perturb_pgd_scores)
                        pgd_pool[m].insert(pgd_pool[m].end(), v.begin(), v.end());
                }
                if (!fgsm_pool.empty() && !pgd_pool.empty()) {
                    const auto rank_f =
                        build_ranking("perturb", Direction::HigherBetter, fgsm_pool);
                    const auto rank_p = build_ranking("perturb", Direction::HigherBetter, pgd_pool);
                    json of = json::array(), op = json::array();
                    bool identical = rank_f.rows.size() == rank_p.rows.size();
                    for (size_t i = 0; i < rank_f.rows.size(); ++i) {
                        of.push_back(rank_f.rows[i].method);
                        if (i < rank_p.rows.size())
                            identical = identical && rank_f.rows[i].method == rank_p.rows[i].method;
                    }
                    for (const auto& row : rank_p.rows) op.push_back(row.method);
                    cmp["fgsm_ranking"] = of;
                    cmp["pgd_ranking"] = op;
                    cmp["identical"] = identical;
                }
            }
            emit.json_file("analysis/attacks.json",
                           {{"per_combo", rates}, {"perturb_ranking_comparison", cmp}});
        }

        // epsilon sweep on the first combo
        if (cfg.sweep_images > 0 && !results.empty()) {
            stage = "sweep";
            const Dataset& test = *combos[0].test;
            Dataset subset;
            subset.num_classes = test.num_classes;
            const size_t n = std::min<size_t>(cfg.sweep_images, test.items.size());
            subset.items.assign(test.items.begin(), test.items.begin() + n);
            const MethodRegistry registry = MethodRegistry::standard(cfg.method_params);
            const auto records = epsilon_sweep(models[0], subset, registry.get(cfg.sweep_method),
                                               cfg.seed, cfg.sweep_eps, cfg.steps);
            json recs = json::array();
            std::vector<std::vector<std::string>> rows;
            for (const auto& rec : records) {
                recs.push_back({{"eps_steps", rec.eps_steps},
                                {"images_used", rec.images_used},
                                {"images_excluded", rec.images_excluded},
                                {"mean_monotonicity", rec.mean_monotonicity},
                                {"mean_smoothness", rec.mean_smoothness}});
                rows.push_back({std::to_string(rec.eps_steps), std::to_string(rec.images_used),
                                std::to_string(rec.images_excluded),
                                fmt_double(rec.mean_monotonicity), fmt_double(rec.mean_smoothness)});
            }
            emit.json_file("analysis/sweep.json",
                           {{"method", cfg.sweep_method}, {"combo_id", results[0].spec.combo_id},
                            {"records", recs}});
            emit.csv("analysis/sweep.csv",
                     {"eps_steps", "images_used", "images_excluded", "mean_monotonicity",
                      "mean_smoothness"},
                     rows);
        }

        // attribution map similarity on the first combo
        if (cfg.similarity_images > 0 && !results.empty()) {
            stage = "similarity";
            const Dataset& test = *combos[0].test;
            const size_t n = std::min<size_t>(cfg.similarity_images, test.items.size());
            const MethodRegistry registry = MethodRegistry::standard(cfg.method_params);
            std::map<std::string, std::vector<AttributionMap>> maps;
            for (const auto& name : cfg.methods) maps[name] = {};
            std::vector<std::map<std::string, AttributionMap>> per_image(n);
            parallel_for(n, cfg.threads, [&](size_t i) {
                const Tensor image = to_tensor(test.items[i].image);
                for (const auto& name : cfg.methods) {
                    MethodRequest req;
                    req.model = &models[0];
                    req.image = &image;
                    req.klass = test.items[i].label;
                    req.seed = cfg.seed;
                    req.image_id = static_cast<uint64_t>(i);
                    per_image[i].emplace(name, registry.run(name, req));
                }
            });
            for (size_t i = 0; i < n; ++i)
                for (auto& [name, map] : per_image[i]) maps[name].push_back(std::move(map));
            const auto sim = similarity_matrix(maps);
            json matrix = json::array();
            for (size_t i = 0; i < sim.methods.size(); ++i) {
                json row = json::array();
                for (size_t j = 0; j < sim.methods.size(); ++j) row.push_back(sim.at(i, j));
                matrix.push_back(row);
            }
            emit.json_file("analysis/similarity.json",
                           {{"methods", sim.methods},
                            {"r", matrix},
                            {"images", n},
                            {"images_excluded", sim.images_excluded},
                            {"combo_id", results[0].spec.combo_id}});
            write_matrix_csv(emit.abs("analysis/similarity.csv"), sim.methods, sim.r);
            emit.record("analysis/similarity.csv");
        }

        stage = "manifest";
        write_json_file(emit.abs("manifest.json"), manifest.to_json());
        return manifest;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        manifest.partial = true;
        manifest.failed_stage = stage;
        try {
            write_json_file(emit.abs("manifest.json"), manifest.to_json());
        } catch (...) {
        }
        throw StageError(stage, e.what());
    }
}

}  // namespace ameval
