#include <catch2/catch_amalgamated.hpp>

#include "ameval/attribution.hpp"
#include "ameval/gradcheck.hpp"
#include "ameval/gaussian.hpp"

#include "support/builders.hpp"

using namespace ameval;
using Catch::Approx;

namespace {

// two-class linear-softmax fixture: gradient direction is w0 - w1
const std::vector<double> kW0 = {0.5, -0.3, 0.2, 0.6, -0.1, 0.4, 0.0, -0.5, 0.3};
const std::vector<double> kW1 = {-0.2, 0.4, 0.1, -0.3, 0.2, -0.6, 0.5, 0.1, -0.2};

Model linear_fixture() { return fixtures::linear_softmax({1, 3, 3}, {kW0, kW1}, {0.1, -0.1}); }

}  // namespace

TEST_CASE("gradients_map of a linear model is proportional to |w|") {
    const auto m = linear_fixture();
    const auto x = fixtures::random_tensor({1, 3, 3}, 17);
    const auto map = gradients_map(m, x, 0);
    // dP0/dx = p0*p1*(w0-w1): a positive scalar times the weight difference
    double ratio = 0.0;
    for (size_t i = 0; i < map.values.size(); ++i) {
        const double expected = std::abs(kW0[i] - kW1[i]);
        if (expected < 1e-12) {
            REQUIRE(map.values[i] == Approx(0.0).margin(1e-14));
            continue;
        }
        const double r = map.values[i] / expected;
        if (ratio == 0.0) ratio = r;
        REQUIRE(r == Approx(ratio).margin(1e-12));
    }
    REQUIRE(ratio > 0.0);
}

TEST_CASE("gradients_map of a constant model is all zero") {
    const auto m = fixtures::linear_softmax({1, 3, 3}, {std::vector<double>(9, 0.0),
                                                        std::vector<double>(9, 0.0)}, {0.3, 0.3});
    const auto map = gradients_map(m, fixtures::random_tensor({1, 3, 3}, 18), 0);
    for (double v : map.values) REQUIRE(v == 0.0);
}

TEST_CASE("gradients_map equals channel-max of finite-difference magnitudes") {
    const auto m = fixtures::toy_cnn(23, 8, 2);  // two input channels
    const auto x = fixtures::random_tensor({2, 8, 8}, 230);
    const auto map = gradients_map(m, x, 1);
    const auto fd = finite_difference_gradient(m, x, 1, 1e-3);
    const AttributionMap fd_map = reduce_channels(fd, ChannelReduce::MaxAbs);
    double worst = 0.0;
    for (size_t i = 0; i < map.values.size(); ++i) {
        const double mag = std::max(map.values[i], fd_map.values[i]);
        if (mag < 1e-8) continue;
        worst = std::max(worst, std::abs(map.values[i] - fd_map.values[i]) / mag);
    }
    REQUIRE(worst < 1e-4);
}

TEST_CASE("channel reductions differ as specified") {
    Tensor grad({2, 1, 1}, {3.0, -4.0});
    REQUIRE(reduce_channels(grad, ChannelReduce::MaxAbs).values[0] == 4.0);
    REQUIRE(reduce_channels(grad, ChannelReduce::SumAbs).values[0] == 7.0);
    REQUIRE(reduce_channels(grad, ChannelReduce::L2).values[0] == Approx(5.0));
}

TEST_CASE("smoothgrad with zero noise equals gradients_map") {
    const auto m = fixtures::toy_cnn(29);
    const auto x = fixtures::random_tensor({1, 8, 8}, 290);
    SmoothGradParams p;
    p.samples = 4;
    p.sigma = 0.0;
    p.seed = 9;
    const auto sg = smoothgrad(m, x, 0, p);
    const auto g = gradients_map(m, x, 0);
    for (size_t i = 0; i < sg.values.size(); ++i) REQUIRE(sg.values[i] == Approx(g.values[i]).margin(1e-15));
}

TEST_CASE("smoothgrad is reproducible for a fixed seed") {
    const auto m = fixtures::toy_cnn(30);
    const auto x = fixtures::random_tensor({1, 8, 8}, 300);
    SmoothGradParams p;
    p.samples = 3;
    p.sigma = 0.15;
    p.seed = 77;
    const auto a = smoothgrad(m, x, 0, p);
    const auto b = smoothgrad(m, x, 0, p);
    REQUIRE(a.values == b.values);
}

TEST_CASE("smoothgrad on a linear model stays proportional to |w| for any sigma") {
    // every sample's gradient is a scalar multiple of (w0-w1), so the
    // average is exactly proportional regardless of the noise draw
    const auto m = linear_fixture();
    const auto x = fixtures::random_tensor({1, 3, 3}, 31);
    SmoothGradParams p;
    p.samples = 16;
    p.sigma = 0.5;
    p.seed = 5;
    const auto map = smoothgrad(m, x, 0, p);
    double ratio = 0.0;
    for (size_t i = 0; i < map.values.size(); ++i) {
        const double expected = std::abs(kW0[i] - kW1[i]);
        if (expected < 1e-12) continue;
        const double r = map.values[i] / expected;
        if (ratio == 0.0) ratio = r;
        REQUIRE(r == Approx(ratio).margin(1e-12));
    }
}

TEST_CASE("integrated gradients: proportionality, zero input, completeness") {
    SECTION("linear model: IG proportional to w .* x for any step count") {
        const auto m = linear_fixture();
        const auto x = fixtures::random_tensor({1, 3, 3}, 37, 0.2, 1.0);
        for (int steps : {1, 7, 64}) {
            IGParams p;
            p.steps = steps;
            const auto map = integrated_gradients(m, x, 0, p);
            double ratio = 0.0;
            for (size_t i = 0; i < map.values.size(); ++i) {
                const double expected = (kW0[i] - kW1[i]) * x.data[i];
                if (std::abs(expected) < 1e-12) continue;
                const double r = map.values[i] / expected;
                if (ratio == 0.0) ratio = r;
                REQUIRE(r == Approx(ratio).margin(1e-10));
            }
            REQUIRE(ratio > 0.0);
        }
    }
    SECTION("black input gives a zero map") {
        const auto m = fixtures::toy_cnn(38);
        Tensor black({1, 8, 8});
        IGParams p;
        p.steps = 8;
        const auto map = integrated_gradients(m, black, 0, p);
        for (double v : map.values) REQUIRE(v == 0.0);
    }
    SECTION("completeness against two forward evaluations at m = 128") {
        const auto m = fixtures::toy_cnn(39);
        const auto x = fixtures::random_tensor({1, 8, 8}, 390);
        IGParams p;
        p.steps = 128;
        const auto map = integrated_gradients(m, x, 1, p);
        double total = 0.0;
        for (double v : map.values) total += v;
        const double fx = forward(m, x).probabilities().data[1];
        const double f0 = forward(m, Tensor({1, 8, 8})).probabilities().data[1];
        REQUIRE(std::abs(total - (fx - f0)) <= 0.01);
    }
    SECTION("steps < 1 rejected") {
        const auto m = fixtures::toy_cnn(40);
        IGParams p;
        p.steps = 0;
        REQUIRE_THROWS_AS(integrated_gradients(m, Tensor({1, 8, 8}), 0, p), std::invalid_argument);
    }
}

TEST_CASE("blur integrated gradients: degenerate paths and completeness") {
    const auto m = fixtures::toy_cnn(41);
    SECTION("vanishing sigma_max gives a zero map") {
        const auto x = fixtures::random_tensor({1, 8, 8}, 410);
        IGParams p;
        p.steps = 1;
        p.blur_sigma_max = 1e-12;  // blur kernel degenerates to identity
        const auto map = blur_integrated_gradients(m, x, 0, p);
        for (double v : map.values) REQUIRE(v == 0.0);
    }
    SECTION("constant image is blur-invariant, so the path has zero length") {
        Tensor x({1, 8, 8});
        for (double& v : x.data) v = 0.4;
        IGParams p;
        p.steps = 6;
        p.blur_sigma_max = 2.0;
        const auto map = blur_integrated_gradients(m, x, 0, p);
        for (double v : map.values) REQUIRE(v == Approx(0.0).margin(1e-12));
    }
    SECTION("completeness against f(X) - f(blur(X, sigma_max)) at m = 128") {
        const auto x = fixtures::random_tensor({1, 8, 8}, 411);
        IGParams p;
        p.steps = 128;
        p.blur_sigma_max = 3.0;
        const auto map = blur_integrated_gradients(m, x, 1, p);
        double total = 0.0;
        for (double v : map.values) total += v;
        const double fx = forward(m, x).probabilities().data[1];
        const double fb = forward(m, gaussian_blur(x, 3.0)).probabilities().data[1];
        REQUIRE(std::abs(total - (fx - fb)) <= 0.02);
    }
    SECTION("sigma_max <= 0 rejected") {
        IGParams p;
        p.blur_sigma_max = 0.0;
        REQUIRE_THROWS_AS(blur_integrated_gradients(m, Tensor({1, 8, 8}), 0, p),
                          std::invalid_argument);
    }
}

TEST_CASE("gradcam collapses to the activation map for one uniformly weighted channel") {
    // conv(1) -> relu -> gap -> dense -> softmax: gradient at relu1 is
    // spatially uniform, so the cam is a positive multiple of the activations
    Model m({1, 4, 4});
    m.add_conv(1).add_relu().add_gap().add_dense(2).add_softmax();
    m.finalize();
    m.init_params(3, 0.8);
    m.layers[3].weights = {1.0, -1.0};  // class 0 prefers the channel
    m.layers[3].bias = {0.0, 0.0};
    const auto x = fixtures::random_tensor({1, 4, 4}, 55);
    const auto pass = forward(m, x);
    const auto relu_act = pass.outputs[1];
    const auto cam = gradcam(m, x, 0, "relu1");
    double ratio = 0.0;
    for (size_t i = 0; i < cam.values.size(); ++i) {
        if (relu_act.data[i] < 1e-12) {
            REQUIRE(cam.values[i] == Approx(0.0).margin(1e-14));
            continue;
        }
        const double r = cam.values[i] / relu_act.data[i];
        if (ratio == 0.0) ratio = r;
        REQUIRE(r == Approx(ratio).margin(1e-10));
    }

    // flipping the head weight makes every channel weight negative: ReLU
    // of the weighted sum is all zero
    m.layers[3].weights = {-1.0, 1.0};
    const auto zero_cam = gradcam(m, x, 0, "relu1");
    for (double v : zero_cam.values) REQUIRE(v == 0.0);
}

TEST_CASE("gradcam rejects layers without spatial extent") {
    const auto m = fixtures::toy_cnn(56);
    const auto x = fixtures::random_tensor({1, 8, 8}, 560);
    REQUIRE_THROWS_AS(gradcam(m, x, 0, "dense1"), std::invalid_argument);
    REQUIRE_THROWS_AS(gradcam(m, x, 0, "nosuch"), std::invalid_argument);
}

TEST_CASE("bilinear upsampling: identity, constant, and hand-computed cases") {
    AttributionMap map(2, 2);
    map.values = {0.0, 1.0, 1.0, 0.0};

    SECTION("identity when target equals source") {
        const auto same = upsample_bilinear(map, 2, 2);
        REQUIRE(same.values == map.values);
    }
    SECTION("1x1 map upsamples to a constant") {
        AttributionMap one(1, 1);
        one.values = {0.7};
        const auto big = upsample_bilinear(one, 3, 5);
        for (double v : big.values) REQUIRE(v == 0.7);
    }
    SECTION("2x2 checker to 3x3: center is the mean") {
        const auto up = upsample_bilinear(map, 3, 3);
        REQUIRE(up.at(1, 1) == Approx(0.5));
        REQUIRE(up.at(0, 0) == 0.0);
        REQUIRE(up.at(2, 2) == 0.0);
        REQUIRE(up.at(0, 2) == 1.0);
        REQUIRE(up.at(2, 0) == 1.0);
    }
    SECTION("2x2 checker to 4x4: corners preserved, interior bilinear") {
        const auto up = upsample_bilinear(map, 4, 4);
        REQUIRE(up.at(0, 0) == 0.0);
        REQUIRE(up.at(0, 3) == 1.0);
        REQUIRE(up.at(3, 0) == 1.0);
        REQUIRE(up.at(3, 3) == 0.0);
        REQUIRE(up.at(1, 1) == Approx(4.0 / 9.0));
    }
    SECTION("invalid targets rejected") {
        REQUIRE_THROWS_AS(upsample_bilinear(map, 0, 3), std::invalid_argument);
        REQUIRE_THROWS_AS(upsample_bilinear(map, 1, 3), std::invalid_argument);
    }
}

TEST_CASE("uniform baseline is seed-deterministic with reasonable mean") {
    const auto a = uniform_baseline(64, 64, 42);
    const auto b = uniform_baseline(64, 64, 42);
    const auto c = uniform_baseline(64, 64, 43);
    REQUIRE(a.values == b.values);
    REQUIRE(a.values != c.values);
    double mean = 0.0;
    for (double v : a.values) {
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
        mean += v;
    }
    mean /= a.values.size();
    REQUIRE(mean > 0.45);
    REQUIRE(mean < 0.55);
}

TEST_CASE("canny baseline: constant image, step edge, binary output") {
    SECTION("constant image yields an all-zero map") {
        Tensor x({1, 8, 8});
        for (double& v : x.data) v = 0.6;
        const auto map = canny_baseline(x);
        for (double v : map.values) REQUIRE(v == 0.0);
    }
    SECTION("vertical step edge localizes to adjacent columns") {
        Tensor x({1, 8, 8});
        const int k = 4;  // first column of the bright region
        for (int y = 0; y < 8; ++y)
            for (int xx = 0; xx < 8; ++xx) x.at(0, y, xx) = xx >= k ? 0.8 : 0.2;
        const auto map = canny_baseline(x);
        bool any = false;
        for (int y = 0; y < 8; ++y)
            for (int xx = 0; xx < 8; ++xx)
                if (map.at(y, xx) != 0.0) {
                    any = true;
                    REQUIRE(xx >= k - 1);
                    REQUIRE(xx <= k + 1);
                }
        REQUIRE(any);
    }
    SECTION("output is strictly binary") {
        const auto img = fixtures::random_tensor({1, 16, 16}, 99);
        const auto map = canny_baseline(img);
        for (double v : map.values) REQUIRE((v == 0.0 || v == 1.0));
    }
    SECTION("threshold order violations rejected") {
        CannyParams p;
        p.low = 0.3;
        p.high = 0.2;
        REQUIRE_THROWS_AS(canny_baseline(fixtures::random_tensor({1, 8, 8}, 1), p),
                          std::invalid_argument);
    }
}

TEST_CASE("normalize_map: rescale, constant convention, idempotence, argmax") {
    AttributionMap map(1, 3);
    map.values = {0.0, 5.0, 10.0};
    const auto norm = normalize_map(map);
    REQUIRE(norm.values == std::vector<double>{0.0, 0.5, 1.0});

    AttributionMap constant(2, 2, 3.3);
    const auto zeros = normalize_map(constant);
    for (double v : zeros.values) REQUIRE(v == 0.0);

    const auto twice = normalize_map(norm);
    REQUIRE(twice.values == norm.values);

    AttributionMap bad(1, 2);
    bad.values = {1.0, std::nan("")};
    REQUIRE_THROWS_AS(normalize_map(bad), std::invalid_argument);

    // argmax set preserved on random maps
    for (uint64_t seed : {1u, 2u, 3u}) {
        const auto random_map = uniform_baseline(6, 6, seed);
        const auto normalized = normalize_map(random_map);
        size_t argmax_before = 0, argmax_after = 0;
        for (size_t i = 0; i < random_map.values.size(); ++i) {
            if (random_map.values[i] > random_map.values[argmax_before]) argmax_before = i;
            if (normalized.values[i] > normalized.values[argmax_after]) argmax_after = i;
        }
        REQUIRE(argmax_before == argmax_after);
    }
}

TEST_CASE("method registry: names, determinism, spatial dims, errors") {
    const auto m = fixtures::toy_cnn(60);
    const auto x = fixtures::random_tensor({1, 8, 8}, 600);
    const auto reg = MethodRegistry::standard();
    const auto names = reg.names();
    for (const char* required :
         {"gradients", "smoothgrad", "intgrad", "blurig", "gradcam", "uniform", "canny"})
        REQUIRE(std::find(names.begin(), names.end(), required) != names.end());
    REQUIRE_THROWS_AS(reg.get("rise"), std::invalid_argument);

    MethodRequest req;
    req.model = &m;
    req.image = &x;
    req.klass = 0;
    req.seed = 4;
    req.image_id = 11;
    for (const auto& name : names) {
        const auto a = reg.run(name, req);
        const auto b = reg.run(name, req);
        REQUIRE(a.height == 8);
        REQUIRE(a.width == 8);
        REQUIRE(a.values == b.values);  // deterministic given (seed, image id)
    }
}
