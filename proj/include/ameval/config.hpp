#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ameval/attribution.hpp"
#include "ameval/curves.hpp"
#include "ameval/model.hpp"

namespace ameval {

// Configuration (exit code 2) vs stage (exit code 3) failures.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StageError : std::runtime_error {
    std::string stage;
    StageError(std::string stage_name, const std::string& what)
        : std::runtime_error("[" + stage_name + "] " + what), stage(std::move(stage_name)) {}
};

// ---------------------------------------------------------------------------
// key = value config files: '#' comments, blank lines ignored, duplicate or
// unknown keys rejected.

inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config: line " + std::to_string(lineno) + ": empty key");
        if (kv.count(key))
            throw ConfigError("config: duplicate key '" + key + "'");
        kv[key] = value;
    }
    return kv;
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Architecture specs. Presets c2 / c3 / c2w, or an explicit layer list like
//   conv:8,relu,pool,conv:16,relu,pool,gap,dense:2,softmax
// conv takes out_channels with optional xK kernel size ("conv:8x5") and an
// optional :valid suffix for unpadded convolution.

inline std::string arch_preset(const std::string& name, int classes) {
    const std::string d = "dense:" + std::to_string(classes) + ",softmax";
    if (name == "c2") return "conv:8,relu,pool,conv:16,relu,pool,gap," + d;
    if (name == "c3") return "conv:8,relu,pool,conv:16,relu,pool,conv:32,relu,gap," + d;
    if (name == "c2w") return "conv:16,relu,pool,conv:32,relu,pool,gap," + d;
    return name;  // explicit spec
}

inline Model parse_arch(const std::string& spec, const std::vector<int>& input_shape) {
    Model m(input_shape);
    for (const std::string& token : split_list(spec)) {
        if (token.rfind("conv:", 0) == 0) {
            std::string rest = token.substr(5);
            bool same = true;
            const auto colon = rest.find(':');
            if (colon != std::string::npos) {
                const std::string padding = rest.substr(colon + 1);
                if (padding == "valid") same = false;
                else if (padding != "same")
                    throw ConfigError("arch: bad conv padding '" + padding + "'");
                rest.resize(colon);
            }
            int out_ch = 0, k = 3;
            const auto x = rest.find('x');
            try {
                if (x != std::string::npos) {
                    out_ch = std::stoi(rest.substr(0, x));
                    k = std::stoi(rest.substr(x + 1));
                } else {
                    out_ch = std::stoi(rest);
                }
            } catch (const std::exception&) {
                throw ConfigError("arch: bad conv token '" + token + "'");
            }
            m.add_conv(out_ch, k, same);
        } else if (token == "relu") {
            m.add_relu();
        } else if (token == "pool") {
            m.add_maxpool();
        } else if (token == "gap") {
            m.add_gap();
        } else if (token.rfind("dense:", 0) == 0) {
            try {
                m.add_dense(std::stoi(token.substr(6)));
            } catch (const std::exception&) {
                throw ConfigError("arch: bad dense token '" + token + "'");
            }
        } else if (token == "softmax") {
            m.add_softmax();
        } else {
            throw ConfigError("arch: unknown layer token '" + token + "'");
        }
    }
    try {
        m.finalize();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("arch: ") + e.what());
    }
    return m;
}

// ---------------------------------------------------------------------------

struct ExperimentConfig {
    std::string out_dir;
    uint64_t seed = 1;
    int threads = 1;

    // dataset
    std::string dataset = "synthetic";  // synthetic | idx
    std::string idx_images, idx_labels;
    int image_size = 48;
    int train_count = 600;
    int test_count = 240;
    double noise = 0.06;
    double noise_variant_step = 0.01;  // variant v uses noise + v * step
    double background = 0.09;
    double background_jitter = 0.05;
    double shape_min_radius = 0.12;  // fraction of image size
    double shape_max_radius = 0.26;
    double shape_min_intensity = 0.35;
    double shape_max_intensity = 0.95;
    int variants = 4;

    // models / training
    std::vector<std::string> archs = {"c2", "c3", "c2w"};
    int train_epochs = 12;
    double train_lr = 0.1;
    int train_batch = 4;
    double train_init_scale = 1.0;
    double train_label_smoothing = 0.45;

    // evaluation
    std::vector<std::string> methods = {"gradients", "smoothgrad", "intgrad", "blurig",
                                        "gradcam",   "uniform",    "canny"};
    std::vector<std::string> metrics = {"del", "ins", "insblur", "perturb"};
    int steps = 100;
    double insblur_sigma = 5.0;
    int eval_count = 40;
    int eps_steps = 1;
    std::string attack = "fgsm";  // fgsm | pgd
    int pgd_iters = 10;
    bool scalar_metrics = true;
    bool compare_pgd = true;
    int emit_curves = 2;  // per (combo, metric, method): curve CSVs for the first N images

    // analysis extras
    std::vector<int> sweep_eps = {1, 2, 4, 8};
    int sweep_images = 120;
    std::string sweep_method = "smoothgrad";
    int similarity_images = 50;
    int top_k = 3;

    // method parameters
    MethodParams method_params;

    static ExperimentConfig from_file(const std::string& path) {
        return from_kv(parse_kv_file(path));
    }

    static ExperimentConfig from_kv(const std::map<std::string, std::string>& kv);

    void validate() const;

    // Canonical semantic key=value form: basis of the config hash. Output
    // location and worker count do not change results and are excluded.
    std::vector<std::pair<std::string, std::string>> canonical_kv() const;
};

namespace detail {

struct KvReader {
    const std::map<std::string, std::string>& kv;
    std::map<std::string, bool> seen;

    explicit KvReader(const std::map<std::string, std::string>& m) : kv(m) {}

    bool has(const std::string& key) {
        seen[key] = true;
        return kv.count(key) != 0;
    }
    std::string str(const std::string& key, const std::string& dflt) {
        return has(key) ? kv.at(key) : dflt;
    }
    int integer(const std::string& key, int dflt) {
        if (!has(key)) return dflt;
        try {
            return std::stoi(kv.at(key));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' expects an integer");
        }
    }
    double real(const std::string& key, double dflt) {
        if (!has(key)) return dflt;
        try {
            return std::stod(kv.at(key));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' expects a number");
        }
    }
    uint64_t u64(const std::string& key, uint64_t dflt) {
        if (!has(key)) return dflt;
        try {
            return std::stoull(kv.at(key));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' expects an unsigned integer");
        }
    }
    bool boolean(const std::string& key, bool dflt) {
        if (!has(key)) return dflt;
        const std::string& v = kv.at(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("config: key '" + key + "' expects true/false");
    }
    void reject_unknown() const {
        for (const auto& [key, value] : kv)
            if (!seen.count(key)) throw ConfigError("config: unknown key '" + key + "'");
    }
};

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_kv(const std::map<std::string, std::string>& kv) {
    detail::KvReader r(kv);
    ExperimentConfig c;
    c.out_dir = r.str("out_dir", c.out_dir);
    c.seed = r.u64("seed", c.seed);
    c.threads = r.integer("threads", c.threads);
    c.dataset = r.str("dataset", c.dataset);
    c.idx_images = r.str("idx_images", c.idx_images);
    c.idx_labels = r.str("idx_labels", c.idx_labels);
    c.image_size = r.integer("image_size", c.image_size);
    c.train_count = r.integer("train_count", c.train_count);
    c.test_count = r.integer("test_count", c.test_count);
    c.noise = r.real("noise", c.noise);
    c.noise_variant_step = r.real("noise_variant_step", c.noise_variant_step);
    c.background = r.real("background", c.background);
    c.background_jitter = r.real("background_jitter", c.background_jitter);
    c.shape_min_radius = r.real("shape_min_radius", c.shape_min_radius);
    c.shape_max_radius = r.real("shape_max_radius", c.shape_max_radius);
    c.shape_min_intensity = r.real("shape_min_intensity", c.shape_min_intensity);
    c.shape_max_intensity = r.real("shape_max_intensity", c.shape_max_intensity);
    c.variants = r.integer("variants", c.variants);
    if (r.has("archs")) c.archs = split_list(kv.at("archs"));
    c.train_epochs = r.integer("train_epochs", c.train_epochs);
    c.train_lr = r.real("train_lr", c.train_lr);
    c.train_batch = r.integer("train_batch", c.train_batch);
    c.train_init_scale = r.real("train_init_scale", c.train_init_scale);
    c.train_label_smoothing = r.real("train_label_smoothing", c.train_label_smoothing);
    if (r.has("methods")) c.methods = split_list(kv.at("methods"));
    if (r.has("metrics")) c.metrics = split_list(kv.at("metrics"));
    c.steps = r.integer("steps", c.steps);
    c.insblur_sigma = r.real("insblur_sigma", c.insblur_sigma);
    c.eval_count = r.integer("eval_count", c.eval_count);
    c.eps_steps = r.integer("eps_steps", c.eps_steps);
    c.attack = r.str("attack", c.attack);
    c.pgd_iters = r.integer("pgd_iters", c.pgd_iters);
    c.scalar_metrics = r.boolean("scalar_metrics", c.scalar_metrics);
    c.compare_pgd = r.boolean("compare_pgd", c.compare_pgd);
    c.emit_curves = r.integer("emit_curves", c.emit_curves);
    if (r.has("sweep_eps")) {
        c.sweep_eps.clear();
        for (const auto& s : split_list(kv.at("sweep_eps"))) {
            try {
                c.sweep_eps.push_back(std::stoi(s));
            } catch (const std::exception&) {
                throw ConfigError("config: sweep_eps expects integers");
            }
        }
    }
    c.sweep_images = r.integer("sweep_images", c.sweep_images);
    c.sweep_method = r.str("sweep_method", c.sweep_method);
    c.similarity_images = r.integer("similarity_images", c.similarity_images);
    c.top_k = r.integer("top_k", c.top_k);
    c.method_params.reduce = channel_reduce_from_string(r.str("channel_reduce", "maxabs"));
    c.method_params.smoothgrad_samples = r.integer("smoothgrad_samples", 8);
    c.method_params.smoothgrad_sigma = r.real("smoothgrad_sigma", 0.1);
    c.method_params.ig_steps = r.integer("ig_steps", 32);
    c.method_params.blur_ig_steps = r.integer("blurig_steps", 16);
    c.method_params.blur_ig_sigma_max = r.real("blurig_sigma_max", 5.0);
    c.method_params.gradcam_layer = r.str("gradcam_layer", "");
    c.method_params.canny.sigma = r.real("canny_sigma", 1.0);
    c.method_params.canny.low = r.real("canny_low", 0.1);
    c.method_params.canny.high = r.real("canny_high", 0.2);
    r.reject_unknown();
    c.validate();
    return c;
}

inline void ExperimentConfig::validate() const {
    if (dataset != "synthetic" && dataset != "idx")
        throw ConfigError("config: dataset must be synthetic or idx");
    if (dataset == "idx" && (idx_images.empty() || idx_labels.empty()))
        throw ConfigError("config: idx dataset needs idx_images and idx_labels");
    if (image_size < 8) throw ConfigError("config: image_size must be >= 8");
    if (train_count < 2 || test_count < 1) throw ConfigError("config: dataset counts too small");
    if (variants < 1) throw ConfigError("config: variants must be >= 1");
    if (archs.empty()) throw ConfigError("config: need at least one architecture");
    if (train_epochs < 1) throw ConfigError("config: train_epochs must be >= 1");
    if (train_lr <= 0) throw ConfigError("config: train_lr must be > 0");
    if (train_batch < 1) throw ConfigError("config: train_batch must be >= 1");
    if (methods.empty()) throw ConfigError("config: need at least one method");
    if (metrics.empty()) throw ConfigError("config: need at least one metric");
    for (const auto& metric : metrics) {
        const auto& known = curve_metric_names();
        if (std::find(known.begin(), known.end(), metric) == known.end())
            throw ConfigError("config: unknown metric '" + metric + "'");
    }
    if (steps < 1) throw ConfigError("config: steps must be >= 1");
    if (insblur_sigma <= 0) throw ConfigError("config: insblur_sigma must be > 0");
    if (eval_count < 1) throw ConfigError("config: eval_count must be >= 1");
    if (eps_steps < 1 || eps_steps > 255) throw ConfigError("config: eps_steps must be in 1..255");
    if (attack != "fgsm" && attack != "pgd") throw ConfigError("config: attack must be fgsm or pgd");
    if (pgd_iters < 1) throw ConfigError("config: pgd_iters must be >= 1");
    for (int k : sweep_eps)
        if (k < 1 || k > 255) throw ConfigError("config: sweep_eps values must be in 1..255");
    if (top_k < 1) throw ConfigError("config: top_k must be >= 1");
    if (threads < 1) throw ConfigError("config: threads must be >= 1");
    const MethodRegistry reg = MethodRegistry::standard(method_params);
    for (const auto& m : methods)
        if (!reg.contains(m)) throw ConfigError("config: unknown method '" + m + "'");
    if (!reg.contains(sweep_method))
        throw ConfigError("config: unknown sweep_method '" + sweep_method + "'");
}

inline std::vector<std::pair<std::string, std::string>> ExperimentConfig::canonical_kv() const {
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
        return s;
    };
    auto join_int = [](const std::vector<int>& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    auto real = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    std::vector<std::pair<std::string, std::string>> kv = {
        {"seed", std::to_string(seed)},
        {"dataset", dataset},
        {"idx_images", idx_images},
        {"idx_labels", idx_labels},
        {"image_size", std::to_string(image_size)},
        {"train_count", std::to_string(train_count)},
        {"test_count", std::to_string(test_count)},
        {"noise", real(noise)},
        {"noise_variant_step", real(noise_variant_step)},
        {"background", real(background)},
        {"background_jitter", real(background_jitter)},
        {"shape_min_radius", real(shape_min_radius)},
        {"shape_max_radius", real(shape_max_radius)},
        {"shape_min_intensity", real(shape_min_intensity)},
        {"shape_max_intensity", real(shape_max_intensity)},
        {"variants", std::to_string(variants)},
        {"archs", join(archs)},
        {"train_epochs", std::to_string(train_epochs)},
        {"train_lr", real(train_lr)},
        {"train_batch", std::to_string(train_batch)},
        {"train_init_scale", real(train_init_scale)},
        {"train_label_smoothing", real(train_label_smoothing)},
        {"methods", join(methods)},
        {"metrics", join(metrics)},
        {"steps", std::to_string(steps)},
        {"insblur_sigma", real(insblur_sigma)},
        {"eval_count", std::to_string(eval_count)},
        {"eps_steps", std::to_string(eps_steps)},
        {"attack", attack},
        {"pgd_iters", std::to_string(pgd_iters)},
        {"scalar_metrics", scalar_metrics ? "true" : "false"},
        {"compare_pgd", compare_pgd ? "true" : "false"},
        {"emit_curves", std::to_string(emit_curves)},
        {"sweep_eps", join_int(sweep_eps)},
        {"sweep_images", std::to_string(sweep_images)},
        {"sweep_method", sweep_method},
        {"similarity_images", std::to_string(similarity_images)},
        {"top_k", std::to_string(top_k)},
        {"channel_reduce", method_params.reduce == ChannelReduce::MaxAbs  ? "maxabs"
                           : method_params.reduce == ChannelReduce::SumAbs ? "sumabs"
                                                                           : "l2"},
        {"smoothgrad_samples", std::to_string(method_params.smoothgrad_samples)},
        {"smoothgrad_sigma", real(method_params.smoothgrad_sigma)},
        {"ig_steps", std::to_string(method_params.ig_steps)},
        {"blurig_steps", std::to_string(method_params.blur_ig_steps)},
        {"blurig_sigma_max", real(method_params.blur_ig_sigma_max)},
        {"gradcam_layer", method_params.gradcam_layer},
        {"canny_sigma", real(method_params.canny.sigma)},
        {"canny_low", real(method_params.canny.low)},
        {"canny_high", real(method_params.canny.high)},
    };
    return kv;  // already in a fixed order; hashing sorts anyway
}

inline std::string config_hash(const ExperimentConfig& c) {
    auto kv = c.canonical_kv();
    std::sort(kv.begin(), kv.end());
    uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&](const std::string& s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
        h ^= 0x1f;
        h *= 0x100000001b3ULL;
    };
    for (const auto& [k, v] : kv) {
        feed(k);
        feed(v);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace ameval
