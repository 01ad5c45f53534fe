// ameval: train models, compute attribution maps, run discrete adversarial
// attacks, score attribution-map metrics and aggregate the analysis.
//
// Exit codes: 0 success, 2 configuration error, 3 stage failure.

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "ameval/analysis.hpp"
#include "ameval/attack.hpp"
#include "ameval/attribution.hpp"
#include "ameval/config.hpp"
#include "ameval/curves.hpp"
#include "ameval/dataset.hpp"
#include "ameval/image_io.hpp"
#include "ameval/map_io.hpp"
#include "ameval/model_io.hpp"
#include "ameval/pipeline.hpp"
#include "ameval/report.hpp"
#include "ameval/scalar_metrics.hpp"
#include "ameval/train.hpp"

namespace {

using ameval::json;

struct ShapesFlags {
    int count = 600;
    int size = 16;
    double noise = 0.08;
    uint64_t seed = 1;
};

ameval::Dataset dataset_from_flags(const std::string& idx_images, const std::string& idx_labels,
                                   const ShapesFlags& shapes) {
    if (!idx_images.empty() || !idx_labels.empty()) {
        if (idx_images.empty() || idx_labels.empty())
            throw ameval::ConfigError("need both --idx-images and --idx-labels");
        return ameval::load_idx_dataset(idx_images, idx_labels);
    }
    ameval::ShapesParams p;
    p.count = shapes.count;
    p.size = shapes.size;
    p.noise = shapes.noise;
    p.seed = shapes.seed;
    return ameval::generate_shapes(p);
}

int resolve_class(const ameval::Model& model, const ameval::Tensor& image, int flag_class) {
    if (flag_class >= 0) {
        if (flag_class >= model.num_classes())
            throw ameval::ConfigError("--class out of range for model output arity");
        return flag_class;
    }
    return ameval::argmax_class(ameval::forward(model, image).probabilities());
}

int cmd_train(const std::string& arch, const std::string& out_path,
              const std::string& idx_images, const std::string& idx_labels,
              const ShapesFlags& shapes, const ameval::TrainConfig& tc, double test_fraction) {
    ameval::Dataset full = dataset_from_flags(idx_images, idx_labels, shapes);
    const size_t test_n = static_cast<size_t>(test_fraction * full.items.size());
    ameval::Dataset test;
    test.num_classes = full.num_classes;
    test.items.assign(full.items.end() - test_n, full.items.end());
    full.items.resize(full.items.size() - test_n);

    const auto& first = full.items.at(0).image;
    ameval::Model model = ameval::parse_arch(ameval::arch_preset(arch, full.num_classes),
                                             {first.channels, first.height, first.width});
    const auto report = ameval::train(model, full, test, tc);
    ameval::save_model(model, out_path);
    json j = {{"model", out_path},
              {"arch", arch},
              {"train_images", full.items.size()},
              {"test_images", test.items.size()},
              {"train_accuracy", report.train_accuracy},
              {"test_accuracy", report.test_accuracy},
              {"final_loss", report.final_loss},
              {"epochs", report.epochs}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attribution-map evaluation toolkit"};
    app.require_subcommand(1);

    // --- train ---
    auto* train_cmd = app.add_subcommand("train", "train a CNN on IDX or synthetic shapes data");
    std::string arch = "c2", model_out = "model.bin", idx_images, idx_labels;
    ShapesFlags shapes;
    ameval::TrainConfig tc;
    double test_fraction = 0.25;
    train_cmd->add_option("--arch", arch, "architecture preset (c2|c3|c2w) or explicit layer list");
    train_cmd->add_option("--out", model_out, "output model path");
    train_cmd->add_option("--idx-images", idx_images, "IDX image file");
    train_cmd->add_option("--idx-labels", idx_labels, "IDX label file");
    train_cmd->add_option("--shapes-count", shapes.count, "synthetic dataset size");
    train_cmd->add_option("--shapes-size", shapes.size, "synthetic image size");
    train_cmd->add_option("--shapes-noise", shapes.noise, "synthetic pixel noise");
    train_cmd->add_option("--shapes-seed", shapes.seed, "synthetic dataset seed");
    train_cmd->add_option("--lr", tc.learning_rate, "learning rate");
    train_cmd->add_option("--epochs", tc.epochs, "training epochs");
    train_cmd->add_option("--batch", tc.batch_size, "batch size");
    train_cmd->add_option("--seed", tc.seed, "training seed");
    train_cmd->add_option("--init-scale", tc.init_scale, "uniform weight init scale");
    train_cmd->add_option("--test-fraction", test_fraction, "held-out fraction");

    // --- attribute ---
    auto* attr_cmd = app.add_subcommand("attribute", "compute an attribution map for one image");
    std::string a_model, a_image, a_method = "gradients", a_out = "map.amf", a_preview;
    int a_class = -1;
    uint64_t a_seed = 1;
    ameval::MethodParams mp;
    attr_cmd->add_option("--model", a_model, "model file")->required();
    attr_cmd->add_option("--image", a_image, "PGM/PPM input image")->required();
    attr_cmd->add_option("--method", a_method, "attribution method name");
    attr_cmd->add_option("--out", a_out, "output map (raw float32 grid)");
    attr_cmd->add_option("--preview", a_preview, "optional PGM preview path");
    attr_cmd->add_option("--class", a_class, "target class (default: predicted)");
    attr_cmd->add_option("--seed", a_seed, "seed for stochastic methods");
    attr_cmd->add_option("--smoothgrad-samples", mp.smoothgrad_samples);
    attr_cmd->add_option("--smoothgrad-sigma", mp.smoothgrad_sigma);
    attr_cmd->add_option("--ig-steps", mp.ig_steps);
    attr_cmd->add_option("--blurig-steps", mp.blur_ig_steps);
    attr_cmd->add_option("--blurig-sigma-max", mp.blur_ig_sigma_max);
    attr_cmd->add_option("--gradcam-layer", mp.gradcam_layer);

    // --- attack ---
    auto* atk_cmd = app.add_subcommand("attack", "FGSM/PGD attack in the 8-bit domain");
    std::string k_model, k_image, k_method = "fgsm", k_out = "adversarial.pgm", k_json;
    int k_eps = 1, k_iters = 1, k_class = -1;
    atk_cmd->add_option("--model", k_model, "model file")->required();
    atk_cmd->add_option("--image", k_image, "PGM/PPM input image")->required();
    atk_cmd->add_option("--method", k_method, "fgsm|pgd");
    atk_cmd->add_option("--eps-steps", k_eps, "perturbation bound k (k/255)");
    atk_cmd->add_option("--iters", k_iters, "iterations (pgd)");
    atk_cmd->add_option("--class", k_class, "loss class (default: predicted)");
    atk_cmd->add_option("--out", k_out, "adversarial image path");
    atk_cmd->add_option("--json", k_json, "JSON sidecar path (default: <out>.json)");

    // --- evaluate ---
    auto* ev_cmd = app.add_subcommand("evaluate", "score one (image, map, metric) triple");
    std::string e_model, e_image, e_map, e_metric = "del", e_adv, e_curve, e_json;
    int e_steps = 100, e_class = -1;
    double e_sigma = 5.0;
    ev_cmd->add_option("--model", e_model, "model file")->required();
    ev_cmd->add_option("--image", e_image, "PGM/PPM input image")->required();
    ev_cmd->add_option("--map", e_map, "attribution map file")->required();
    ev_cmd->add_option("--metric", e_metric, "del|ins|insblur|perturb");
    ev_cmd->add_option("--adversarial", e_adv, "adversarial image (perturb only)");
    ev_cmd->add_option("--steps", e_steps, "schedule steps");
    ev_cmd->add_option("--class", e_class, "target class (default: predicted)");
    ev_cmd->add_option("--insblur-sigma", e_sigma, "blur sigma for insblur");
    ev_cmd->add_option("--curve-out", e_curve, "curve CSV path");
    ev_cmd->add_option("--json", e_json, "score JSON path");

    // --- analyze ---
    auto* an_cmd = app.add_subcommand("analyze", "aggregate scores.json files into rankings");
    std::string n_scores, n_out = "analysis";
    int n_topk = 3;
    an_cmd->add_option("--scores", n_scores, "directory scanned recursively for scores.json")
        ->required();
    an_cmd->add_option("--out", n_out, "output directory");
    an_cmd->add_option("--top-k", n_topk, "top-k summary size");

    // --- pipeline ---
    auto* pl_cmd = app.add_subcommand("pipeline", "full experiment from a config file");
    std::string p_config, p_out;
    pl_cmd->add_option("--config", p_config, "key = value config file")->required();
    pl_cmd->add_option("--out", p_out, "override out_dir");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*train_cmd)
            return cmd_train(arch, model_out, idx_images, idx_labels, shapes, tc, test_fraction);

        if (*attr_cmd) {
            const ameval::Model model = ameval::load_model(a_model);
            const ameval::Tensor image = ameval::to_tensor(ameval::read_pnm(a_image));
            const int klass = resolve_class(model, image, a_class);
            const auto registry = ameval::MethodRegistry::standard(mp);
            ameval::MethodRequest req;
            req.model = &model;
            req.image = &image;
            req.klass = klass;
            req.seed = a_seed;
            req.image_id = ameval::hash_string(a_image);
            const auto map = registry.run(a_method, req);
            ameval::save_map(map, a_out);
            if (!a_preview.empty()) ameval::save_map_preview(map, a_preview);
            json j = {{"map", a_out}, {"method", a_method}, {"class", klass},
                      {"height", map.height}, {"width", map.width}};
            std::cout << j.dump(2) << "\n";
            return 0;
        }

        if (*atk_cmd) {
            const ameval::Model model = ameval::load_model(k_model);
            const ameval::Image8 image = ameval::read_pnm(k_image);
            const ameval::Tensor tensor = ameval::to_tensor(image);
            const int klass = resolve_class(model, tensor, k_class);
            const auto pass = ameval::forward(model, tensor);
            ameval::AttackBudget budget{k_eps, k_iters, {klass, pass.probabilities().data[klass]}};
            ameval::AttackResult res;
            if (k_method == "fgsm")
                res = ameval::fgsm(model, image, budget);
            else if (k_method == "pgd")
                res = ameval::pgd(model, image, budget);
            else
                throw ameval::ConfigError("unknown attack method '" + k_method + "'");
            ameval::write_pnm(res.adversarial, k_out);
            const auto adv_pass = ameval::forward(model, ameval::to_tensor(res.adversarial));
            json j = {{"adversarial", k_out},
                      {"method", k_method},
                      {"eps_steps", k_eps},
                      {"iterations", k_iters},
                      {"loss_class", klass},
                      {"success", res.success},
                      {"probability_drop", res.probability_drop},
                      {"clean_class", ameval::argmax_class(pass.probabilities())},
                      {"adversarial_class", ameval::argmax_class(adv_pass.probabilities())}};
            const std::string sidecar = k_json.empty() ? k_out + ".json" : k_json;
            ameval::write_json_file(sidecar, j);
            std::cout << j.dump(2) << "\n";
            return 0;
        }

        if (*ev_cmd) {
            const ameval::Model model = ameval::load_model(e_model);
            const ameval::Image8 image = ameval::read_pnm(e_image);
            const ameval::AttributionMap map = ameval::load_map(e_map);
            const int klass = resolve_class(model, ameval::to_tensor(image), e_class);
            ameval::ProbabilityCurve curve;
            if (e_metric == "del") {
                curve = ameval::deletion_curve(model, image, map, e_steps, klass);
            } else if (e_metric == "ins") {
                curve = ameval::insertion_curve(model, image, map, e_steps, klass);
            } else if (e_metric == "insblur") {
                curve = ameval::insertion_blur_curve(model, image, map, e_steps, klass, e_sigma);
            } else if (e_metric == "perturb") {
                if (e_adv.empty())
                    throw ameval::ConfigError("perturb metric needs --adversarial");
                ameval::AttackResult res;
                res.adversarial = ameval::read_pnm(e_adv);
                res.success = ameval::attack_success(model, image, res.adversarial);
                res.delta_sign.resize(image.pixels.size());
                for (size_t i = 0; i < image.pixels.size(); ++i) {
                    const int d = static_cast<int>(res.adversarial.pixels[i]) -
                                  static_cast<int>(image.pixels[i]);
                    res.delta_sign[i] = d > 0 ? 1 : (d < 0 ? -1 : 0);
                }
                curve = ameval::perturbation_curve(model, image, res, map, e_steps, klass);
            } else {
                throw ameval::ConfigError("unknown metric '" + e_metric + "'");
            }
            const double area = ameval::auc(curve);
            const auto dir = ameval::metric_direction(e_metric);
            json j = {{"metric", e_metric},
                      {"class", klass},
                      {"auc", area},
                      {"direction", dir == ameval::Direction::HigherBetter ? "higher" : "lower"},
                      {"monotonicity", ameval::monotonicity(curve.y, dir)},
                      {"smoothness", ameval::smoothness(curve.y)}};
            if (!e_curve.empty()) ameval::write_curve_csv(e_curve, curve);
            if (!e_json.empty()) ameval::write_json_file(e_json, j);
            std::cout << j.dump(2) << "\n";
            return 0;
        }

        if (*an_cmd) {
            namespace fs = std::filesystem;
            struct LoadedCombo {
                std::string combo_id, dataset_id, arch_id;
                std::map<std::string, std::map<std::string, std::vector<double>>> scores;
            };
            std::vector<LoadedCombo> combos;
            std::vector<fs::path> files;
            for (const auto& entry : fs::recursive_directory_iterator(n_scores))
                if (entry.is_regular_file() && entry.path().filename() == "scores.json")
                    files.push_back(entry.path());
            std::sort(files.begin(), files.end());
            for (const auto& path : files) {
                std::ifstream in(path);
                json j = json::parse(in);
                LoadedCombo combo;
                combo.combo_id = j.at("combo_id");
                combo.dataset_id = j.at("dataset_id");
                combo.arch_id = j.at("arch_id");
                for (const auto& rec : j.at("records"))
                    combo.scores[rec.at("metric")][rec.at("method")].push_back(rec.at("value"));
                combos.push_back(std::move(combo));
            }
            if (combos.empty()) throw ameval::ConfigError("no scores.json files under " + n_scores);

            std::set<std::string> metrics;
            for (const auto& c : combos)
                for (const auto& [metric, rest] : c.scores) metrics.insert(metric);
            fs::create_directories(n_out);
            json rankings_json = json::object();
            for (const auto& metric : metrics) {
                std::vector<ameval::RankingTable> tables;
                for (const auto& c : combos) {
                    if (!c.scores.count(metric)) continue;
                    auto t = ameval::build_ranking(metric, ameval::any_metric_direction(metric),
                                                   c.scores.at(metric));
                    t.combo_id = c.combo_id;
                    t.dataset_id = c.dataset_id;
                    t.arch_id = c.arch_id;
                    tables.push_back(std::move(t));
                }
                json per_combo = json::array();
                for (const auto& t : tables) per_combo.push_back(ameval::ranking_to_json(t));
                rankings_json[metric] = per_combo;
                if (tables.size() >= 2) {
                    const auto cm = ameval::consistency_matrix(tables);
                    ameval::write_json_file(n_out + "/consistency_" + metric + ".json",
                                            ameval::consistency_to_json(cm));
                    ameval::write_matrix_csv(n_out + "/consistency_" + metric + ".csv", cm.labels,
                                             cm.tau);
                }
                bool have_baselines = !tables.empty();
                for (const auto& t : tables) {
                    try {
                        t.rank_of("uniform");
                        t.rank_of("canny");
                    } catch (const std::exception&) {
                        have_baselines = false;
                    }
                }
                if (have_baselines) {
                    const auto counts = ameval::baseline_sanity_check(tables);
                    ameval::write_json_file(n_out + "/sanity_" + metric + ".json",
                                            {{"metric", metric},
                                             {"tables", counts.tables},
                                             {"uniform_last", counts.uniform_last},
                                             {"canny_second_last", counts.canny_second_last}});
                }
                if (!tables.empty() &&
                    static_cast<int>(tables[0].rows.size()) >= n_topk && tables.size() >= 2) {
                    json per_dataset = json::object();
                    for (const auto& dt : ameval::top_k_summary(tables, n_topk)) {
                        json rows = json::array();
                        for (const auto& row : dt.top)
                            rows.push_back({{"method", row.method}, {"mean", row.mean}});
                        per_dataset[dt.dataset_id] = rows;
                    }
                    ameval::write_json_file(n_out + "/top" + std::to_string(n_topk) + "_" + metric +
                                                ".json",
                                            per_dataset);
                }
            }
            ameval::write_json_file(n_out + "/rankings.json", rankings_json);
            std::cout << "analyzed " << combos.size() << " combos into " << n_out << "\n";
            return 0;
        }

        if (*pl_cmd) {
            ameval::ExperimentConfig cfg = ameval::ExperimentConfig::from_file(p_config);
            if (!p_out.empty()) cfg.out_dir = p_out;
            const auto manifest = ameval::run_pipeline(cfg);
            std::cout << "pipeline complete: " << manifest.artifacts.size()
                      << " artifacts under " << cfg.out_dir << " (config " << manifest.config_hash
                      << ")\n";
            return 0;
        }
    } catch (const ameval::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ameval::StageError& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
