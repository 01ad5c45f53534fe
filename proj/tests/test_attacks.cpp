#include <catch2/catch_amalgamated.hpp>

#include "ameval/attack.hpp"
#include "ameval/dataset.hpp"
#include "ameval/train.hpp"

#include "support/builders.hpp"

using namespace ameval;

namespace {

Image8 random_image(int size, uint64_t seed) {
    Image8 img(size, size, 1);
    Rng rng(seed);
    for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.next_u64() % 256);
    return img;
}

// loss gradient strictly positive everywhere: dL/dx = (p0-1)(w0-w1) with
// w0-w1 negative in every element and target class 0
Model positive_gradient_model() {
    return fixtures::linear_softmax({1, 2, 2}, {{-1, -2, -1.5, -0.5}, {1, 2, 1.5, 0.5}}, {0, 0});
}

}  // namespace

TEST_CASE("fgsm with strictly positive gradient moves every pixel up by k") {
    const auto m = positive_gradient_model();
    Image8 img(2, 2, 1);
    img.pixels = {10, 200, 255, 0};
    const AttackBudget budget{1, 1, {0, 0.0}};
    const auto res = fgsm(m, img, budget);
    REQUIRE(res.adversarial.pixels == std::vector<uint8_t>{11, 201, 255, 1});
    REQUIRE(res.delta_sign == std::vector<int8_t>{1, 1, 0, 1});  // 0 only at the clipped 255
}

TEST_CASE("fgsm on a zero-gradient model leaves the image unchanged") {
    const auto m = fixtures::linear_softmax({1, 2, 2}, {{0, 0, 0, 0}, {0, 0, 0, 0}}, {0.4, 0.1});
    const auto img = random_image(2, 5);
    const AttackBudget budget{3, 1, {0, 0.0}};
    const auto res = fgsm(m, img, budget);
    REQUIRE(res.adversarial.pixels == img.pixels);
    REQUIRE_FALSE(res.success);
    for (int8_t s : res.delta_sign) REQUIRE(s == 0);
}

TEST_CASE("fgsm rejects invalid budgets") {
    const auto m = positive_gradient_model();
    const auto img = random_image(2, 6);
    REQUIRE_THROWS_AS(fgsm(m, img, AttackBudget{1, 2, {0, 0.0}}), std::invalid_argument);
    REQUIRE_THROWS_AS(fgsm(m, img, AttackBudget{0, 1, {0, 0.0}}), std::invalid_argument);
    REQUIRE_THROWS_AS(fgsm(m, img, AttackBudget{256, 1, {0, 0.0}}), std::invalid_argument);
    REQUIRE_THROWS_AS(fgsm(m, img, AttackBudget{1, 1, {7, 0.0}}), std::invalid_argument);
}

TEST_CASE("fgsm succeeds on most of a desk-scale shapes test set at k=1") {
    ShapesParams p;
    p.count = 400;
    p.size = 48;
    p.noise = 0.06;
    p.seed = 81;
    p.min_radius_frac = 0.12;
    p.max_radius_frac = 0.26;
    p.min_intensity = 0.35;
    p.max_intensity = 0.95;
    p.background = 0.09;
    p.background_jitter = 0.05;
    const auto train_set = generate_shapes(p);
    p.seed = 82;
    p.count = 150;
    const auto test_set = generate_shapes(p);
    Model m({1, 48, 48});
    m.add_conv(8).add_relu().add_maxpool().add_conv(16).add_relu().add_maxpool().add_dense(2)
        .add_softmax();
    m.finalize();
    TrainConfig tc;
    tc.epochs = 10;
    tc.learning_rate = 0.1;
    tc.seed = 7;
    tc.label_smoothing = 0.65;  // soft targets keep margins in the +-1/255 regime
    const auto report = train(m, train_set, test_set, tc);
    REQUIRE(report.test_accuracy > 0.9);
    int ok = 0;
    for (const auto& item : test_set.items) {
        const AttackBudget budget{1, 1, {item.label, 0.0}};
        ok += fgsm(m, item.image, budget).success;
    }
    const double rate = static_cast<double>(ok) / test_set.items.size();
    REQUIRE(rate > 0.5);
}

TEST_CASE("pgd with one iteration at k=1 degenerates to fgsm") {
    const auto m = fixtures::toy_cnn(91);
    ShapesParams p;
    p.count = 4;
    p.size = 8;
    const auto ds = generate_shapes(p);
    for (const auto& item : ds.items) {
        const AttackBudget budget{1, 1, {item.label, 0.0}};
        const auto a = fgsm(m, item.image, budget);
        const auto b = pgd(m, item.image, budget);
        REQUIRE(a.adversarial.pixels == b.adversarial.pixels);
        REQUIRE(a.success == b.success);
    }
}

TEST_CASE("pgd respects the l-infinity ball for any input") {
    const auto m = fixtures::toy_cnn(92);
    for (int k : {1, 2, 5}) {
        for (uint64_t seed : {1u, 2u, 3u}) {
            const auto img = random_image(8, seed * 7);
            const AttackBudget budget{k, 6, {0, 0.0}};
            const auto res = pgd(m, img, budget);
            REQUIRE(res.adversarial.same_shape(img));
            for (size_t i = 0; i < img.pixels.size(); ++i) {
                const int d = static_cast<int>(res.adversarial.pixels[i]) -
                              static_cast<int>(img.pixels[i]);
                REQUIRE(std::abs(d) <= k);
            }
        }
    }
}

TEST_CASE("pgd success rate is at least fgsm success rate on the same set") {
    ShapesParams p;
    p.count = 200;
    p.size = 16;
    p.noise = 0.05;
    p.seed = 93;
    const auto train_set = generate_shapes(p);
    p.seed = 94;
    p.count = 80;
    const auto test_set = generate_shapes(p);
    Model m({1, 16, 16});
    m.add_conv(8).add_relu().add_maxpool().add_conv(16).add_relu().add_maxpool().add_dense(2)
        .add_softmax();
    m.finalize();
    TrainConfig tc;
    tc.epochs = 4;
    tc.learning_rate = 0.15;
    tc.seed = 5;
    tc.label_smoothing = 0.4;
    train(m, train_set, test_set, tc);
    int fgsm_ok = 0, pgd_ok = 0;
    for (const auto& item : test_set.items) {
        fgsm_ok += fgsm(m, item.image, AttackBudget{1, 1, {item.label, 0.0}}).success;
        pgd_ok += pgd(m, item.image, AttackBudget{1, 10, {item.label, 0.0}}).success;
    }
    REQUIRE(pgd_ok >= fgsm_ok);
}

TEST_CASE("k=1 deltas stay in {-1,0,+1} with zeros only at clips or dead gradients") {
    const auto m = fixtures::toy_cnn(95);
    for (uint64_t seed : {11u, 12u, 13u}) {
        const auto img = random_image(8, seed);
        const auto pass = forward(m, to_tensor(img));
        const auto bwd = backward_loss(m, pass, 0);
        const auto res = fgsm(m, img, AttackBudget{1, 1, {0, 0.0}});
        for (size_t i = 0; i < img.pixels.size(); ++i) {
            const int d = static_cast<int>(res.adversarial.pixels[i]) -
                          static_cast<int>(img.pixels[i]);
            REQUIRE(std::abs(d) <= 1);
            REQUIRE(static_cast<int>(res.delta_sign[i]) == (d > 0 ? 1 : d < 0 ? -1 : 0));
            if (d == 0) {
                const bool zero_grad = bwd.input_grad.data[i] == 0.0;
                const bool clipped = (img.pixels[i] == 0 && bwd.input_grad.data[i] < 0.0) ||
                                     (img.pixels[i] == 255 && bwd.input_grad.data[i] > 0.0);
                REQUIRE((zero_grad || clipped));
            }
        }
    }
}

TEST_CASE("attack_success compares predicted classes") {
    // decision boundary between the two images: w = (1,-1,...) margins flip
    const auto m = fixtures::linear_softmax({1, 2, 2}, {{1, -1, 1, -1}, {-1, 1, -1, 1}}, {0, 0});
    Image8 a(2, 2, 1);
    a.pixels = {200, 10, 200, 10};  // class 0
    Image8 b(2, 2, 1);
    b.pixels = {10, 200, 10, 200};  // class 1
    REQUIRE(attack_success(m, a, b));
    REQUIRE_FALSE(attack_success(m, a, a));
    Image8 wrong(3, 2, 1);
    REQUIRE_THROWS_AS(attack_success(m, a, wrong), std::invalid_argument);
}

TEST_CASE("attack results are consistent with attack_success") {
    const auto m = fixtures::toy_cnn(96);
    for (uint64_t seed : {21u, 22u, 23u, 24u}) {
        const auto img = random_image(8, seed);
        const auto res = fgsm(m, img, AttackBudget{2, 1, {0, 0.0}});
        REQUIRE(res.success == attack_success(m, img, res.adversarial));
    }
}

TEST_CASE("attacks are deterministic") {
    const auto m = fixtures::toy_cnn(97);
    const auto img = random_image(8, 31);
    const auto a = fgsm(m, img, AttackBudget{1, 1, {0, 0.0}});
    const auto b = fgsm(m, img, AttackBudget{1, 1, {0, 0.0}});
    REQUIRE(a.adversarial.pixels == b.adversarial.pixels);
    const auto c = pgd(m, img, AttackBudget{2, 5, {0, 0.0}});
    const auto d = pgd(m, img, AttackBudget{2, 5, {0, 0.0}});
    REQUIRE(c.adversarial.pixels == d.adversarial.pixels);
}
