#include <catch2/catch_amalgamated.hpp>

#include "ameval/attack.hpp"
#include "ameval/curves.hpp"
#include "ameval/scalar_metrics.hpp"

#include "support/brute_stats.hpp"
#include "support/builders.hpp"

using namespace ameval;
using Catch::Approx;

namespace {

Image8 random_image(int size, uint64_t seed) {
    Image8 img(size, size, 1);
    Rng rng(seed);
    for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.next_u64() % 256);
    return img;
}

}  // namespace

TEST_CASE("pixel schedule sorts by value with row-major tie break") {
    AttributionMap map(2, 2);
    map.values = {3, 1, 2, 0};
    const auto s = pixel_schedule(map, 4);
    REQUIRE(s.order == std::vector<int>{0, 2, 1, 3});
    for (int c : s.chunk_sizes) REQUIRE(c == 1);

    AttributionMap constant(2, 3, 0.5);
    const auto tie = pixel_schedule(constant, 6);
    REQUIRE(tie.order == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("pixel schedule is a permutation with near-equal chunks") {
    const auto map = uniform_baseline(8, 8, 3);
    const auto s = pixel_schedule(map, 7);  // 64 = 7*9 + 1: first chunk gets the remainder
    std::vector<int> sorted = s.order;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 64; ++i) REQUIRE(sorted[i] == i);
    REQUIRE(s.chunk_sizes.size() == 7);
    REQUIRE(s.chunk_sizes[0] == 10);
    for (size_t i = 1; i < 7; ++i) REQUIRE(s.chunk_sizes[i] == 9);

    REQUIRE_THROWS_AS(pixel_schedule(map, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(pixel_schedule(map, 65), std::invalid_argument);
}

TEST_CASE("deletion curve boundaries and monotone decrease on a linear model") {
    // class-0 evidence nonnegative everywhere: deleting high-weight pixels
    // first can only lower the class probability
    const std::vector<double> w0 = {0.9, 0.5, 0.7, 0.1, 0.3, 0.8, 0.2, 0.6, 0.4};
    const std::vector<double> w1(9, 0.0);
    const auto m = fixtures::linear_softmax({1, 3, 3}, {w0, w1}, {0, 0});
    const auto img = random_image(3, 11);
    AttributionMap map(3, 3);
    map.values = w0;  // |w| ordering
    const auto curve = deletion_curve(m, img, map, 9, 0);

    REQUIRE(curve.x.front() == 0.0);
    REQUIRE(curve.x.back() == 1.0);
    REQUIRE(curve.y.front() == forward(m, to_tensor(img)).probabilities().data[0]);
    const Image8 black(3, 3, 1, 0);
    REQUIRE(curve.y.back() == forward(m, to_tensor(black)).probabilities().data[0]);
    for (size_t i = 0; i + 1 < curve.y.size(); ++i) REQUIRE(curve.y[i + 1] <= curve.y[i] + 1e-15);
}

TEST_CASE("insertion curve boundaries") {
    const auto m = fixtures::toy_cnn(13);
    const auto img = random_image(8, 13);
    const auto map = uniform_baseline(8, 8, 5);
    const auto curve = insertion_curve(m, img, map, 16, 1);
    const Image8 black(8, 8, 1, 0);
    REQUIRE(curve.y.front() == forward(m, to_tensor(black)).probabilities().data[1]);
    REQUIRE(curve.y.back() == forward(m, to_tensor(img)).probabilities().data[1]);
}

TEST_CASE("insertion equals deletion with reversed map, run backwards") {
    const auto m = fixtures::toy_cnn(14);
    const auto img = random_image(4, 14);
    AttributionMap map(4, 4);
    Rng rng(6);
    for (double& v : map.values) v = rng.uniform01();
    AttributionMap reversed = map;
    for (double& v : reversed.values) v = -v;
    const int n = 16;
    const auto ins = insertion_curve(m, img, map, n, 0);
    const auto del = deletion_curve(m, img, reversed, n, 0);
    // visiting the same images in opposite order; ties cannot occur in the map
    for (int i = 0; i <= n; ++i) REQUIRE(ins.y[i] == Approx(del.y[n - i]).margin(1e-15));
}

TEST_CASE("insertion-blur curve boundaries and constant-image invariance") {
    const auto m = fixtures::toy_cnn(15);
    const auto img = random_image(8, 15);
    const auto map = uniform_baseline(8, 8, 7);
    const auto curve = insertion_blur_curve(m, img, map, 16, 0, 5.0);
    const Image8 blurred = to_image8(gaussian_blur(to_tensor(img), 5.0));
    REQUIRE(curve.y.front() == forward(m, to_tensor(blurred)).probabilities().data[0]);
    REQUIRE(curve.y.back() == forward(m, to_tensor(img)).probabilities().data[0]);

    Image8 constant(8, 8, 1, 120);
    const auto flat = insertion_blur_curve(m, constant, map, 8, 0, 25.0);
    for (double y : flat.y) REQUIRE(y == flat.y.front());

    REQUIRE_THROWS_AS(insertion_blur_curve(m, img, map, 8, 0, 0.0), std::invalid_argument);
}

TEST_CASE("perturbation curve boundaries and failed-attack rejection") {
    const auto m = fixtures::toy_cnn(16);
    const auto img = random_image(8, 16);
    const auto map = uniform_baseline(8, 8, 8);

    AttackResult failed;
    failed.adversarial = img;
    failed.success = false;
    REQUIRE_THROWS_AS(perturbation_curve(m, img, failed, map, 8, 0), std::invalid_argument);

    // synthetic successful attack: flip enough pixels to change the argmax
    AttackResult attack;
    attack.adversarial = img;
    for (auto& p : attack.adversarial.pixels) p = static_cast<uint8_t>(255 - p);
    attack.success = true;
    const auto curve = perturbation_curve(m, img, attack, map, 16, 0);
    REQUIRE(curve.y.front() ==
            forward(m, to_tensor(attack.adversarial)).probabilities().data[0]);
    REQUIRE(curve.y.back() == forward(m, to_tensor(img)).probabilities().data[0]);
}

TEST_CASE("restoring untouched pixels leaves the probability unchanged") {
    const auto m = fixtures::toy_cnn(17);
    const auto img = random_image(4, 17);
    AttackResult attack;
    attack.adversarial = img;
    attack.adversarial.pixels[0] += 3;  // only pixels 0 and 1 differ
    attack.adversarial.pixels[1] += 3;
    attack.success = true;
    AttributionMap map(4, 4);
    map.values.assign(16, 0.0);
    map.values[0] = 0.1;  // touched pixels restored last
    map.values[1] = 0.2;
    for (int i = 2; i < 16; ++i) map.values[i] = 1.0 + i;
    const auto curve = perturbation_curve(m, img, attack, map, 16, 0);
    // steps 1..14 restore pixels whose delta is zero
    for (int i = 1; i <= 14; ++i) REQUIRE(curve.y[i] == curve.y.front());
    REQUIRE(curve.y.back() == forward(m, to_tensor(img)).probabilities().data[0]);
}

TEST_CASE("auc: trapezoid values and input validation") {
    ProbabilityCurve flat;
    flat.x = {0.0, 0.4, 1.0};
    flat.y = {0.3, 0.3, 0.3};
    REQUIRE(auc(flat) == Approx(0.3));

    ProbabilityCurve ramp;
    ramp.x = {0.0, 1.0};
    ramp.y = {0.0, 1.0};
    REQUIRE(auc(ramp) == Approx(0.5));

    ProbabilityCurve three;
    three.x = {0.0, 0.5, 1.0};
    three.y = {0.0, 0.5, 1.0};
    REQUIRE(auc(three) == Approx(0.5));

    ProbabilityCurve bad;
    bad.x = {0.0};
    bad.y = {0.1};
    REQUIRE_THROWS_AS(auc(bad), std::invalid_argument);
    ProbabilityCurve nonmono;
    nonmono.x = {0.0, 0.5, 0.5};
    nonmono.y = {0.0, 0.1, 0.2};
    REQUIRE_THROWS_AS(auc(nonmono), std::invalid_argument);
}

TEST_CASE("auc agrees with the interpolate-then-integrate oracle") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.next_u64() % 30);
        ProbabilityCurve c;
        double x = 0.0;
        for (int i = 0; i < n; ++i) {
            c.x.push_back(x);
            c.y.push_back(rng.uniform01());
            x += rng.uniform(0.01, 1.0);
        }
        for (double& xi : c.x) xi /= c.x.back();
        REQUIRE(auc(c) == Approx(brute::auc(c.x, c.y)).margin(1e-12));
    }
}

TEST_CASE("auc stays in [0,1] for probability curves") {
    Rng rng(78);
    for (int trial = 0; trial < 20; ++trial) {
        ProbabilityCurve c;
        const int n = 5 + static_cast<int>(rng.next_u64() % 20);
        for (int i = 0; i <= n; ++i) {
            c.x.push_back(static_cast<double>(i) / n);
            c.y.push_back(rng.uniform01());
        }
        const double a = auc(c);
        REQUIRE(a >= 0.0);
        REQUIRE(a <= 1.0);
    }
}

TEST_CASE("explanation map masks by the normalized attribution") {
    const auto img = fixtures::random_tensor({1, 3, 3}, 21);
    AttributionMap ones(3, 3, 1.0);
    REQUIRE(explanation_map(img, ones).data == img.data);

    AttributionMap zeros(3, 3, 0.0);
    for (double v : explanation_map(img, zeros).data) REQUIRE(v == 0.0);

    AttributionMap half(3, 3, 0.0);
    for (int i = 0; i < 4; ++i) half.values[i] = 1.0;
    const auto masked = explanation_map(img, half);
    for (int i = 0; i < 9; ++i)
        REQUIRE(masked.data[i] == (i < 4 ? img.data[i] : 0.0));

    AttributionMap unnorm(3, 3, 2.0);
    REQUIRE_THROWS_AS(explanation_map(img, unnorm), std::invalid_argument);
}

TEST_CASE("average drop follows the clamped formula") {
    const auto m = fixtures::toy_cnn(22);
    const auto img = fixtures::random_tensor({1, 8, 8}, 220);
    const auto map = normalize_map(uniform_baseline(8, 8, 9));
    const double fx = forward(m, img).probabilities().data[0];
    const double fe = forward(m, explanation_map(img, map)).probabilities().data[0];
    REQUIRE(average_drop(m, img, map, 0) == Approx(std::max(fx - fe, 0.0)));

    AttributionMap ones(8, 8, 1.0);
    REQUIRE(average_drop(m, img, ones, 0) == 0.0);  // explanation map equals the input
}

TEST_CASE("increase in confidence: equality is not an increase") {
    const auto m = fixtures::toy_cnn(23);
    const auto img = fixtures::random_tensor({1, 8, 8}, 230);
    AttributionMap ones(8, 8, 1.0);
    REQUIRE(increase_in_confidence(m, img, ones, 0) == 0);
}

TEST_CASE("masking a distractor region raises confidence") {
    // region pixels 4..8 carry evidence against class 0; hiding them helps
    std::vector<double> w0(9, 0.0), w1(9, 0.0);
    for (int i = 0; i < 4; ++i) w0[i] = 1.0;
    for (int i = 4; i < 9; ++i) w1[i] = 1.5;
    const auto m = fixtures::linear_softmax({1, 3, 3}, {w0, w1}, {0, 0});
    Tensor img({1, 3, 3});
    for (double& v : img.data) v = 0.8;
    AttributionMap keep_evidence(3, 3, 0.0);
    for (int i = 0; i < 4; ++i) keep_evidence.values[i] = 1.0;
    REQUIRE(increase_in_confidence(m, img, keep_evidence, 0) == 1);
    REQUIRE(average_drop(m, img, keep_evidence, 0) == 0.0);
}

TEST_CASE("iic and average drop are complementary") {
    const auto m = fixtures::toy_cnn(24);
    for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        const auto img = fixtures::random_tensor({1, 8, 8}, seed * 11);
        const auto map = normalize_map(uniform_baseline(8, 8, seed));
        const double ad = average_drop(m, img, map, 0);
        const int iic = increase_in_confidence(m, img, map, 0);
        if (iic == 1) REQUIRE(ad == 0.0);
        if (ad > 0.0) REQUIRE(iic == 0);
    }
}

TEST_CASE("complexity is the normalized L1 mass") {
    AttributionMap zeros(4, 4, 0.0);
    REQUIRE(complexity(zeros) == 0.0);
    AttributionMap ones(4, 4, 1.0);
    REQUIRE(complexity(ones) == 1.0);
    AttributionMap half(4, 4, 0.0);
    for (int i = 0; i < 8; ++i) half.values[i] = 1.0;
    REQUIRE(complexity(half) == 0.5);
    AttributionMap bad(2, 2, 1.5);
    REQUIRE_THROWS_AS(complexity(bad), std::invalid_argument);
}

TEST_CASE("coherency: perfect, inverted, independent, and degenerate maps") {
    const auto img = fixtures::random_tensor({1, 8, 8}, 25);
    const auto map = uniform_baseline(8, 8, 77);

    const auto fixed = [&](const Tensor&) { return map; };
    REQUIRE(coherency(img, map, fixed) == Approx(1.0));

    const auto inverted = [&](const Tensor&) {
        AttributionMap inv = map;
        for (double& v : inv.values) v = 1.0 - v;
        return inv;
    };
    REQUIRE(coherency(img, map, inverted) == Approx(0.0).margin(1e-12));

    const auto independent = [&](const Tensor&) { return uniform_baseline(64, 64, 5); };
    const auto big_map = uniform_baseline(64, 64, 6);
    const auto big_img = fixtures::random_tensor({1, 64, 64}, 26);
    const double r = coherency(big_img, big_map, independent);
    REQUIRE(std::abs(r - 0.5) < 0.1);

    AttributionMap constant(8, 8, 0.4);
    REQUIRE(coherency(img, constant, fixed) == 0.0);
}

TEST_CASE("adcc harmonic mean and degenerate inputs") {
    REQUIRE(adcc(0.0, 0.0, 1.0) == Approx(1.0));
    REQUIRE(adcc(0.5, 0.5, 0.5) == Approx(0.5));
    REQUIRE(adcc(1.0 - 1e-9, 0.0, 1.0) < 1e-8);
    REQUIRE_THROWS_AS(adcc(1.0, 0.0, 1.0), std::domain_error);
    REQUIRE_THROWS_AS(adcc(0.0, 1.0, 1.0), std::domain_error);
    REQUIRE_THROWS_AS(adcc(0.0, 0.0, 0.0), std::domain_error);
}

TEST_CASE("metric directions are registered") {
    REQUIRE(metric_direction("del") == Direction::LowerBetter);
    REQUIRE(metric_direction("ins") == Direction::HigherBetter);
    REQUIRE(metric_direction("insblur") == Direction::HigherBetter);
    REQUIRE(metric_direction("perturb") == Direction::HigherBetter);
    REQUIRE_THROWS_AS(metric_direction("pointing-game"), std::invalid_argument);
}

TEST_CASE("a correct attribution map beats the uniform baseline on perturb AUC") {
    // linear models with a known importance pattern, attacked at the decision
    // boundary; statistical expectation checked across seeds
    int correct_wins = 0;
    const int trials = 50;
    double mean_gap = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        Rng rng(1000 + trial);
        std::vector<double> w0(36), w1(36, 0.0);
        for (double& w : w0) w = rng.uniform(-1.0, 1.0);
        Image8 img(6, 6, 1);
        for (auto& px : img.pixels) px = static_cast<uint8_t>(rng.next_u64() % 256);
        // bias places the sample close to the boundary so a +-k attack flips it
        auto m = fixtures::linear_softmax({1, 6, 6}, {w0, w1}, {0.0, 0.0});
        const auto t = to_tensor(img);
        double z = 0.0;
        for (int i = 0; i < 36; ++i) z += w0[i] * t.data[i];
        m.layers[0].bias = {-z + 0.05, 0.0};
        const int label = 0;
        const auto attack = fgsm(m, img, AttackBudget{4, 1, {label, 0.0}});
        if (!attack.success) continue;
        AttributionMap correct(6, 6);
        for (int i = 0; i < 36; ++i) correct.values[i] = std::abs(w0[i]);
        const auto uniform = uniform_baseline(6, 6, 2000 + trial);
        const double a = auc(perturbation_curve(m, img, attack, correct, 36, label));
        const double b = auc(perturbation_curve(m, img, attack, uniform, 36, label));
        correct_wins += a > b;
        mean_gap += a - b;
    }
    REQUIRE(correct_wins > trials / 2);
    REQUIRE(mean_gap > 0.0);
}
