#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "resiren/net.hpp"

using Catch::Approx;
using Catch::Matchers::ContainsSubstring;
using namespace resiren;

namespace {

NetworkConfig tiny_config(int depth, ResidualMode mode, ActivationKind first) {
    NetworkConfig cfg;
    cfg.depth = depth;
    cfg.input_dim = 3;
    cfg.hidden_dim = 6;
    cfg.embedding_dim = 4;
    cfg.output_dim = 3;
    cfg.residual = mode;
    cfg.first_layer = first;
    return cfg;
}

// Scalar objective sum_i c_i * y_i with fixed coefficients, evaluated through
// the head; the workhorse for finite-difference checks.
double scalar_loss(const NetworkConfig& cfg, const ParameterSet<double>& params,
                   const std::vector<double>& enc, std::size_t batch, const std::vector<double>& coeffs) {
    auto res = forward(cfg, params, enc.data(), batch, false, true);
    double loss = 0.0;
    for (std::size_t i = 0; i < res.head.size(); ++i) loss += coeffs[i] * res.head[i];
    return loss;
}

double max_rel_error(const NetworkConfig& cfg, std::uint64_t seed) {
    const std::size_t batch = 3;
    auto params = init_parameters<double>(cfg, seed);
    Rng rng(seed ^ 0x5bd1e995u);
    std::vector<double> enc(batch * static_cast<std::size_t>(cfg.input_dim));
    for (auto& v : enc) v = rng.uniform(-1.0, 1.0);
    std::vector<double> coeffs(batch * static_cast<std::size_t>(cfg.output_dim));
    for (auto& v : coeffs) v = rng.uniform(-1.0, 1.0);

    auto res = forward(cfg, params, enc.data(), batch, true, true);
    const auto grads = backward(cfg, params, res.trace, coeffs, true);

    double worst = 0.0;
    const double h = 1e-6;
    for (std::size_t i = 0; i < params.data.size(); ++i) {
        auto perturbed = params;
        perturbed.data[i] += h;
        const double up = scalar_loss(cfg, perturbed, enc, batch, coeffs);
        perturbed.data[i] -= 2.0 * h;
        const double down = scalar_loss(cfg, perturbed, enc, batch, coeffs);
        const double fd = (up - down) / (2.0 * h);
        const double an = grads.data[i];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        worst = std::max(worst, std::abs(fd - an) / denom);
    }
    return worst;
}

} // namespace

TEST_CASE("parameter count matches the layer-shape arithmetic", "[net]") {
    NetworkConfig paper;
    paper.depth = 16;
    paper.input_dim = 4;
    paper.hidden_dim = 512;
    paper.embedding_dim = 256;
    paper.output_dim = 11;
    // (4*512+512) + 14*(512*512+512) + (512*256+256) + (256*11+11)
    const std::uint64_t expected = (4ull * 512 + 512) + 14ull * (512ull * 512 + 512) +
                                   (512ull * 256 + 256) + (256ull * 11 + 11);
    CHECK(paper.param_count() == expected);
    CHECK(paper.param_count() == 3813899ull);

    NetworkConfig tiny;
    tiny.depth = 2;
    tiny.input_dim = 3;
    tiny.hidden_dim = 5;
    tiny.embedding_dim = 4;
    tiny.output_dim = 2;
    CHECK(tiny.param_count() == (3 * 5 + 5) + (5 * 4 + 4) + (4 * 2 + 2));
}

TEST_CASE("layer shapes and activations follow the 1-based convention", "[net]") {
    const auto cfg = tiny_config(5, ResidualMode::Half, ActivationKind::HSiren);
    CHECK(cfg.layer_in(1) == 3);
    CHECK(cfg.layer_out(1) == 6);
    CHECK(cfg.layer_in(5) == 6);
    CHECK(cfg.layer_out(5) == 4);
    CHECK(cfg.activation_at(1) == ActivationKind::HSiren);
    CHECK(cfg.activation_at(2) == ActivationKind::Sine);
    CHECK(cfg.activation_at(4) == ActivationKind::Sine);
    CHECK(cfg.activation_at(5) == ActivationKind::Identity);
}

TEST_CASE("residual mixing covers layers 3..D-1 only", "[net]") {
    NetworkConfig cfg = tiny_config(16, ResidualMode::Half, ActivationKind::HSiren);
    CHECK_FALSE(cfg.mixes(1));
    CHECK_FALSE(cfg.mixes(2));
    CHECK(cfg.mixes(3));
    CHECK(cfg.mixes(15));
    CHECK_FALSE(cfg.mixes(16));

    cfg.depth = 3; // no equal-width pair to mix between
    CHECK_FALSE(cfg.mixes(2));
    CHECK_FALSE(cfg.mixes(3));
    cfg.depth = 2;
    CHECK_FALSE(cfg.mixes(2));

    cfg.depth = 16;
    cfg.residual = ResidualMode::Off;
    for (int j = 1; j <= 16; ++j) CHECK_FALSE(cfg.mixes(j));

    cfg.residual = ResidualMode::SqrtTwo;
    CHECK(cfg.mix_factor() == Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
    cfg.residual = ResidualMode::Half;
    CHECK(cfg.mix_factor() == 0.5);
}

TEST_CASE("activation functions match their closed forms", "[net]") {
    CHECK(activation(ActivationKind::Sine, 30.0, 0.1) == Approx(std::sin(3.0)).epsilon(1e-15));
    CHECK(activation(ActivationKind::HSiren, 30.0, 0.1) ==
          Approx(std::sin(30.0 * std::sinh(0.2))).epsilon(1e-15));
    CHECK(activation(ActivationKind::Identity, 30.0, 0.7) == 0.7);

    // Derivatives against central differences.
    const double h = 1e-7;
    for (const double x : {-0.4, -0.05, 0.0, 0.13, 0.6}) {
        for (const auto kind : {ActivationKind::HSiren, ActivationKind::Sine, ActivationKind::Identity}) {
            const double fd =
                (activation(kind, 30.0, x + h) - activation(kind, 30.0, x - h)) / (2.0 * h);
            CHECK(activation_derivative(kind, 30.0, x) == Approx(fd).margin(1e-5));
        }
    }
}

TEST_CASE("initialization respects the per-layer bounds", "[net]") {
    NetworkConfig cfg = tiny_config(3, ResidualMode::Half, ActivationKind::HSiren);
    cfg.input_dim = 4;
    cfg.hidden_dim = 8;
    cfg.embedding_dim = 8;
    const auto params = init_parameters<double>(cfg, 123);

    auto check_range = [&](const double* w, std::size_t n, double bound) {
        double lo = 0.0, hi = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            REQUIRE(std::abs(w[i]) <= bound);
            lo = std::min(lo, w[i]);
            hi = std::max(hi, w[i]);
        }
        // The draw should actually use the range, not collapse near zero.
        CHECK(hi > 0.5 * bound);
        CHECK(lo < -0.5 * bound);
    };
    check_range(params.layer_w(1), 4 * 8, 1.0 / 4.0);
    check_range(params.layer_w(2), 8 * 8, std::sqrt(6.0 / 8.0) / 30.0);
    check_range(params.layer_w(3), 8 * 8, std::sqrt(6.0 / 8.0) / 30.0);
    check_range(params.head_w(), 8 * 3, std::sqrt(6.0 / 8.0));

    for (int j = 1; j <= 3; ++j)
        for (int u = 0; u < cfg.layer_out(j); ++u) CHECK(params.layer_b(j)[u] == 0.0);
    for (int u = 0; u < cfg.output_dim; ++u) CHECK(params.head_b()[u] == 0.0);
}

TEST_CASE("float and double initializations share one realization", "[net]") {
    const auto cfg = tiny_config(4, ResidualMode::SqrtTwo, ActivationKind::Sine);
    const auto pf = init_parameters<float>(cfg, 77);
    const auto pd = init_parameters<double>(cfg, 77);
    REQUIRE(pf.data.size() == pd.data.size());
    for (std::size_t i = 0; i < pf.data.size(); ++i)
        REQUIRE(pf.data[i] == static_cast<float>(pd.data[i]));
}

TEST_CASE("forward output is independent of batch grouping", "[net]") {
    const auto cfg = tiny_config(5, ResidualMode::Half, ActivationKind::HSiren);
    const auto params = init_parameters<float>(cfg, 9);
    Rng rng(17);
    const std::size_t batch = 7;
    std::vector<float> enc(batch * 3);
    for (auto& v : enc) v = static_cast<float>(rng.uniform(-1.0, 1.0));

    const auto full = forward(cfg, params, enc.data(), batch, false, true);
    for (std::size_t s = 0; s < batch; ++s) {
        const auto one = forward(cfg, params, enc.data() + s * 3, 1, false, true);
        for (int c = 0; c < cfg.embedding_dim; ++c)
            REQUIRE(one.embeddings[static_cast<std::size_t>(c)] ==
                    full.embeddings[s * 4 + static_cast<std::size_t>(c)]);
        for (int c = 0; c < cfg.output_dim; ++c)
            REQUIRE(one.head[static_cast<std::size_t>(c)] ==
                    full.head[s * 3 + static_cast<std::size_t>(c)]);
    }
}

TEST_CASE("the trace satisfies the residual recurrence", "[net]") {
    for (const auto mode : {ResidualMode::Off, ResidualMode::Half, ResidualMode::SqrtTwo}) {
        const auto cfg = tiny_config(5, mode, ActivationKind::HSiren);
        const auto params = init_parameters<float>(cfg, 21);
        Rng rng(4);
        std::vector<float> enc(2 * 3);
        for (auto& v : enc) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        const auto res = forward(cfg, params, enc.data(), 2, true, false);
        const float r = static_cast<float>(cfg.mix_factor());

        // h'_1 = h_1, h'_2 = h_2 (chain seeds), h'_D = h_D (no skip into the
        // embedding layer); in between h'_j = (h_j + h'_{j-1}) * r when mixing.
        REQUIRE(res.trace.hp[0] == res.trace.h[0]);
        REQUIRE(res.trace.hp[1] == res.trace.h[1]);
        REQUIRE(res.trace.hp[4] == res.trace.h[4]);
        for (int j = 3; j <= 4; ++j) {
            const auto& h = res.trace.h[static_cast<std::size_t>(j) - 1];
            const auto& hp = res.trace.hp[static_cast<std::size_t>(j) - 1];
            const auto& hp_prev = res.trace.hp[static_cast<std::size_t>(j) - 2];
            for (std::size_t i = 0; i < h.size(); ++i) {
                if (cfg.mixes(j))
                    REQUIRE(hp[i] == (h[i] + hp_prev[i]) * r);
                else
                    REQUIRE(hp[i] == h[i]);
            }
        }
        // z_D is the embedding (Identity activation).
        REQUIRE(res.embeddings == res.trace.hp[4]);
    }
}

TEST_CASE("depths 2 and 3 are bit-identical across residual modes", "[net]") {
    for (const int depth : {2, 3}) {
        std::vector<std::vector<float>> outs;
        for (const auto mode : {ResidualMode::Off, ResidualMode::Half, ResidualMode::SqrtTwo}) {
            const auto cfg = tiny_config(depth, mode, ActivationKind::HSiren);
            const auto params = init_parameters<float>(cfg, 31);
            Rng rng(8);
            std::vector<float> enc(4 * 3);
            for (auto& v : enc) v = static_cast<float>(rng.uniform(-1.0, 1.0));
            outs.push_back(forward(cfg, params, enc.data(), 4, false, true).head);
        }
        REQUIRE(outs[0] == outs[1]);
        REQUIRE(outs[0] == outs[2]);
    }
}

TEST_CASE("analytic gradients match finite differences", "[net]") {
    // A condensed version of the exhaustive acceptance check: one net per
    // (depth, mode, first-layer) combination.
    std::uint64_t seed = 1000;
    for (const int depth : {2, 3, 5})
        for (const auto mode : {ResidualMode::Off, ResidualMode::Half, ResidualMode::SqrtTwo})
            for (const auto first : {ActivationKind::HSiren, ActivationKind::Sine}) {
                const auto cfg = tiny_config(depth, mode, first);
                INFO("depth " << depth << " mode " << to_string(mode) << " first " << to_string(first));
                CHECK(max_rel_error(cfg, seed++) < 1e-4);
            }
}

TEST_CASE("embedding-level gradients also match finite differences", "[net]") {
    const auto cfg = tiny_config(4, ResidualMode::Half, ActivationKind::HSiren);
    const std::size_t batch = 2;
    const auto params = init_parameters<double>(cfg, 55);
    Rng rng(66);
    std::vector<double> enc(batch * 3);
    for (auto& v : enc) v = rng.uniform(-1.0, 1.0);
    std::vector<double> coeffs(batch * 4);
    for (auto& v : coeffs) v = rng.uniform(-1.0, 1.0);

    auto res = forward(cfg, params, enc.data(), batch, true, false);
    const auto grads = backward(cfg, params, res.trace, coeffs, false);

    auto loss_at = [&](const ParameterSet<double>& p) {
        auto r = forward(cfg, p, enc.data(), batch, false, false);
        double loss = 0.0;
        for (std::size_t i = 0; i < r.embeddings.size(); ++i) loss += coeffs[i] * r.embeddings[i];
        return loss;
    };
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.data.size(); ++i) {
        auto perturbed = params;
        perturbed.data[i] += h;
        const double up = loss_at(perturbed);
        perturbed.data[i] -= 2.0 * h;
        const double fd = (up - loss_at(perturbed)) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(grads.data[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - grads.data[i]) / denom);
    }
    CHECK(worst < 1e-4);
    // The head receives no gradient on the embedding path.
    for (int c = 0; c < cfg.embedding_dim * cfg.output_dim; ++c)
        CHECK(grads.head_w()[c] == 0.0);
}

TEST_CASE("non-finite activations abort with the layer named", "[net]") {
    const auto cfg = tiny_config(4, ResidualMode::Half, ActivationKind::HSiren);
    auto params = init_parameters<float>(cfg, 2);
    params.layer_w(2)[0] = std::numeric_limits<float>::quiet_NaN();
    std::vector<float> enc(3, 0.5f);
    CHECK_THROWS_WITH(forward(cfg, params, enc.data(), 1, false, false),
                      ContainsSubstring("non-finite activation at layer 2"));
}

TEST_CASE("forward validates its inputs", "[net]") {
    const auto cfg = tiny_config(3, ResidualMode::Off, ActivationKind::Sine);
    const auto params = init_parameters<float>(cfg, 1);
    std::vector<float> enc;
    CHECK_THROWS_AS(forward(cfg, params, enc, false, false), Error);
    enc.assign(4, 0.0f); // not a multiple of input_dim = 3
    CHECK_THROWS_WITH(forward(cfg, params, enc, false, false), ContainsSubstring("multiple"));

    NetworkConfig bad = cfg;
    bad.depth = 1;
    CHECK_THROWS_WITH(bad.validate(), ContainsSubstring("depth"));
    bad = cfg;
    bad.omega0 = 0.0;
    CHECK_THROWS_WITH(bad.validate(), ContainsSubstring("omega0"));
    bad = cfg;
    bad.first_layer = ActivationKind::Identity;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("stability profile is deterministic and matches the frozen snapshot", "[net]") {
    NetworkConfig cfg;
    cfg.depth = 6;
    cfg.input_dim = 4;
    cfg.hidden_dim = 32;
    cfg.embedding_dim = 16;
    cfg.output_dim = 3;
    const auto params = init_parameters<float>(cfg, 7);
    const auto prof = stability_profile(cfg, params, 4096, 99);
    REQUIRE(prof.layer_std.size() == 6);

    // Frozen realization (Half, HSiren first layer). The decay across the
    // mixing layers is the expected signature of the r = 1/2 chain.
    const double expected[6] = {5.056718553, 0.990863779, 0.689571779,
                                0.531012011, 0.416908261, 0.017550817};
    for (int j = 0; j < 6; ++j) CHECK(prof.layer_std[static_cast<std::size_t>(j)] == Approx(expected[j]).margin(1e-6));

    // Bitwise repeatability.
    const auto again = stability_profile(cfg, params, 4096, 99);
    REQUIRE(again.layer_std == prof.layer_std);

    // Without mixing the sine-argument scale stays near 1 through the body.
    NetworkConfig off = cfg;
    off.residual = ResidualMode::Off;
    const auto off_prof = stability_profile(off, init_parameters<float>(off, 7), 4096, 99);
    for (int j = 2; j <= 5; ++j) {
        CHECK(off_prof.layer_std[static_cast<std::size_t>(j) - 1] > 0.7);
        CHECK(off_prof.layer_std[static_cast<std::size_t>(j) - 1] < 1.3);
    }
}
