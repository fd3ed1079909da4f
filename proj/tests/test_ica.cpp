// SPDX-License-Identifier: Apache-2.0
//
// ICA tests: whitening, the infomax update rule against quadrature oracles,
// the hardware-in-the-loop separation driver and output pairing.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bssim/ica.hpp"
#include "bssim/metrics.hpp"
#include "bssim/mixing.hpp"
#include "bssim/signalgen.hpp"

using namespace bssim;
using Catch::Approx;

namespace {

Eigen::MatrixXd uniform_sources(int n, int samples, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd x(n, samples);
    const double half = std::sqrt(3.0); // unit variance
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < samples; ++t)
            x(i, t) = rng.uniform(-half, half);
    return x;
}

/// Quadrature oracle: E[f(u)] for u ~ U(-sqrt(3), sqrt(3)) via Simpson.
template <typename F>
double uniform_expectation(F f) {
    const double half = std::sqrt(3.0);
    const int n = 2000; // even
    const double h = 2.0 * half / n;
    double acc = f(-half) + f(half);
    for (int k = 1; k < n; ++k)
        acc += f(-half + k * h) * ((k % 2) ? 4.0 : 2.0);
    return acc * h / 3.0 / (2.0 * half);
}

/// Scalar fixed point of 1 + E[tanh(a u) a u] - E[(a u)^2] = 0 for
/// unit-variance uniform u, located by bisection.
double uniform_fixed_point_scale() {
    const auto f = [](double a) {
        const double e_tanh = uniform_expectation(
            [a](double u) { return std::tanh(a * u) * a * u; });
        return 1.0 + e_tanh - a * a;
    };
    double lo = 0.5, hi = 3.0;
    REQUIRE(f(lo) > 0.0);
    REQUIRE(f(hi) < 0.0);
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

TEST_CASE("whiten: identity input, unit covariance, orthogonalized mixing", "[ica]") {
    // Whitening twice: the second V is identity to first order.
    const auto x0 = uniform_sources(4, 20000, 11);
    auto [v0, z0] = whiten(x0);
    auto [v1, z1] = whiten(z0);
    CHECK((v1 - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-6);

    // cov(Z) = I within 1e-3 Frobenius.
    const Eigen::MatrixXd cov =
        z0 * z0.transpose() / static_cast<double>(z0.cols());
    CHECK((cov - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-3);

    // X = A S with iid uniform S: V*A has near-orthogonal columns.
    Eigen::MatrixXd a(4, 4);
    a << 1.0, 0.4, -0.2, 0.1, //
        0.3, 1.1, 0.5, -0.4,  //
        -0.2, 0.2, 0.9, 0.3,  //
        0.1, -0.3, 0.2, 1.2;
    const auto s = uniform_sources(4, 200000, 12);
    auto [v, z] = whiten(a * s);
    const Eigen::MatrixXd va = v * a;
    const Eigen::MatrixXd gram = va.transpose() * va;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (i != j)
                REQUIRE(std::abs(gram(i, j)) / std::sqrt(gram(i, i) * gram(j, j)) < 1e-2);

    // Degenerate mixing rejected.
    Eigen::MatrixXd rank_deficient = a;
    rank_deficient.row(3) = rank_deficient.row(2);
    CHECK_THROWS_AS(whiten(rank_deficient * s), std::invalid_argument);
    CHECK_THROWS_AS(whiten(Eigen::MatrixXd::Zero(4, 8)), std::invalid_argument);
}

TEST_CASE("infomax_step: zero learning rate leaves W unchanged", "[ica]") {
    UnmixState st;
    st.W = Eigen::MatrixXd::Identity(2, 2);
    st.W(0, 1) = 0.25;
    st.row_scales = Eigen::VectorXd::Ones(2);
    st.lr = 0.0;
    const Eigen::MatrixXd before = st.W;

    IcaConfig cfg;
    cfg.complex_structured = false;
    cfg.lr_initial = 0.0;
    infomax_step(st, uniform_sources(2, 4096, 3), cfg);
    CHECK(st.W == before);

    Eigen::MatrixXd bad = uniform_sources(2, 64, 4);
    bad(1, 10) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(infomax_step(st, bad, cfg), std::invalid_argument);
}

TEST_CASE("infomax_step is near-stationary at the uniform fixed-point scale", "[ica]") {
    const double alpha = uniform_fixed_point_scale();
    // Sanity on the oracle itself: residual at the located root.
    const double resid = 1.0 +
                         uniform_expectation([alpha](double u) {
                             return std::tanh(alpha * u) * alpha * u;
                         }) -
                         alpha * alpha;
    REQUIRE(std::abs(resid) < 1e-10);

    const int b = 65536;
    UnmixState st;
    st.W = Eigen::MatrixXd::Identity(2, 2);
    st.row_scales = Eigen::VectorXd::Ones(2);
    st.lr = 1.0;
    IcaConfig cfg;
    cfg.complex_structured = false;
    cfg.lr_initial = 1.0;
    cfg.lr_decay = 0.0;

    const Eigen::MatrixXd y = alpha * uniform_sources(2, b, 71);
    infomax_step(st, y, cfg);
    const double dw_norm = (st.W - Eigen::MatrixXd::Identity(2, 2)).norm();
    CHECK(dw_norm < 3.0 / std::sqrt(static_cast<double>(b)));
}

TEST_CASE("the -E[yy^T] term decorrelates a correlated Gaussian pair", "[ica]") {
    Rng rng(42);
    Eigen::Matrix2d l; // chol([[1, .5], [.5, 1]])
    l << 1.0, 0.0, 0.5, std::sqrt(0.75);

    UnmixState st;
    st.W = Eigen::MatrixXd::Identity(2, 2);
    st.row_scales = Eigen::VectorXd::Ones(2);
    st.lr = 0.02;
    IcaConfig cfg;
    cfg.complex_structured = false;
    cfg.lr_initial = 0.02;
    cfg.lr_decay = 0.0;

    const int b = 16384;
    const auto gauss_batch = [&]() {
        Eigen::MatrixXd g(2, b);
        for (int t = 0; t < b; ++t) {
            const Eigen::Vector2d v(rng.gaussian(), rng.gaussian());
            g.col(t) = l * v;
        }
        return g;
    };
    const Eigen::MatrixXd held_out = gauss_batch();

    const auto offdiag = [&]() {
        const Eigen::MatrixXd y = st.W * held_out;
        const Eigen::MatrixXd c = y * y.transpose() / static_cast<double>(b);
        return std::abs(c(0, 1));
    };

    std::array<double, 5> checkpoints{};
    checkpoints[0] = offdiag();
    for (int step = 1; step <= 100; ++step) {
        infomax_step(st, st.W * gauss_batch(), cfg);
        if (step % 25 == 0)
            checkpoints[static_cast<std::size_t>(step / 25)] = offdiag();
    }
    for (int k = 1; k < 5; ++k)
        REQUIRE(checkpoints[k] < checkpoints[k - 1]);
    CHECK(checkpoints[4] < 0.25 * checkpoints[0]);
}

TEST_CASE("run_bss: already-separated input converges immediately", "[ica]") {
    const double fs = 100.0e6;
    ChipConfig ccfg;
    ccfg.filter_mode = FilterMode::PassThrough;
    ccfg.passthrough_bw = 24.0e6;
    ccfg.noise_vrms = 0.0;
    ccfg.a3 = 0.0;
    ccfg.unit_cap_mismatch = 0.0;
    ccfg.row_gain_mismatch = 0.0;
    ChipInstance chip(ccfg);

    // Four independent tones at the per-rail fixed-point amplitude: already
    // separated, so the first update is already below tolerance.
    SourceBundle s;
    const std::array<double, 4> freqs = {1.1e6, 1.7e6, 2.3e6, 3.1e6};
    // Fixed point of 1 + E[tanh(a cos) a cos] - a^2/2 = 0 is a ~ 2.08846;
    // set per-rail amplitude there (Vpp = 2a).
    const double a_star = 2.08846;
    for (int k = 0; k < 4; ++k)
        s.sources[k] = gen_tone(freqs[k], 2.0 * a_star, 2.0e-3, fs);
    const auto x = stack_rails(s);

    IcaConfig cfg;
    cfg.whiten = false;
    cfg.complex_structured = true;
    cfg.batch_samples = 8192;
    cfg.max_epochs = 50;
    cfg.convergence_tol = 1.0e-3;
    auto res = run_bss(x, chip, cfg, fs);

    CHECK(res.state.converged);
    CHECK(res.state.history.size() == 1);
    CHECK(res.state.history[0].stationarity < 0.1);

    // Y tracks the pass-through-filtered X: the unit weight quantizes to
    // 4095/4096 and the row scales undo it; what remains is the single
    // lr-sized update applied before the convergence check.
    const RailStreams xf = filter_rails(ccfg, x);
    const auto n = res.y.samples.cols();
    const Eigen::MatrixXd expect = xf.samples.rightCols(n);
    CHECK((res.y.samples - expect).cwiseAbs().maxCoeff() < 5e-3);

    // Quantization consistency: the dequantized loaded matrix matches the
    // working copy within half an LSB times the row scale.
    const Real8 loaded = loaded_unmixing_matrix(chip, res.state);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            REQUIRE(std::abs(loaded(i, j) - res.state.W(i, j)) <=
                    0.5 / 4096.0 * res.state.row_scales(i) + 1e-12);
}

TEST_CASE("run_bss_ideal separates a 2x2 uniform mixture (oracle check)", "[ica]") {
    Eigen::MatrixXd a(2, 2);
    a << 1.0, 0.5, 0.5, 1.0;
    const auto s = uniform_sources(2, 120000, 2025);
    const Eigen::MatrixXd x = a * s;

    IcaConfig cfg;
    cfg.complex_structured = false;
    cfg.whiten = true;
    cfg.batch_samples = 4096;
    cfg.max_epochs = 500;
    cfg.lr_initial = 0.05;
    cfg.lr_decay = 0.01;
    cfg.convergence_tol = 1.0e-4;
    auto res = run_bss_ideal(x, cfg, &a);

    const Eigen::MatrixXd g = res.state.W * a;
    CHECK(amari_index(g) < 0.05);

    // Brute-force oracle: compare against A^-1 up to permutation and scale.
    // The best row pairing of W against A^-1 leaves only small residuals.
    const Eigen::MatrixXd ainv = a.inverse();
    double best = 1e300;
    for (int perm = 0; perm < 2; ++perm) {
        double worst = 0.0;
        for (int i = 0; i < 2; ++i) {
            const Eigen::RowVectorXd wr = res.state.W.row(i);
            const Eigen::RowVectorXd ar = ainv.row(perm == 0 ? i : 1 - i);
            const double scale = wr.dot(ar) / ar.squaredNorm();
            worst = std::max(worst, (wr - scale * ar).norm() / (scale * ar).norm());
        }
        best = std::min(best, worst);
    }
    CHECK(best < 0.1);

    // Stationarity at convergence on a held-out batch.
    const auto held = uniform_sources(2, 1 << 17, 77);
    const Eigen::MatrixXd y = res.state.W * (a * held);
    const double b = static_cast<double>(y.cols());
    const Eigen::MatrixXd k = Eigen::MatrixXd::Identity(2, 2) +
                              (y.array().tanh().matrix() * y.transpose()) / b -
                              (y * y.transpose()) / b;
    CHECK(k.norm() < 10.0 * 1.0e-3);
}

TEST_CASE("source scaling equivariance: X and the run are bit-identical", "[ica]") {
    // D with power-of-two entries: A -> A D^-1 and S -> D S change neither
    // X nor anything computed from it, bit for bit.
    const auto a = steering_matrix({-35.0, -8.0, 12.0, 40.0}, 0.5);
    SourceBundle s;
    const std::array<double, 4> freqs = {1.1e6, 1.7e6, 2.3e6, 3.1e6};
    for (int k = 0; k < 4; ++k)
        s.sources[k] = gen_tone(freqs[k], 0.2, 1.0e-4, 100.0e6);

    const std::array<double, 4> d = {0.5, 2.0, 0.25, 4.0};
    Complex4 a_scaled = a.complex_entries;
    SourceBundle s_scaled = s;
    for (int k = 0; k < 4; ++k) {
        a_scaled.col(k) /= d[k];
        for (auto& v : s_scaled.sources[k].i_samples)
            v *= d[k];
        for (auto& v : s_scaled.sources[k].q_samples)
            v *= d[k];
    }
    const auto x1 = mix(a, s);
    const auto x2 = mix(MixingMatrix::from_complex(a_scaled), s_scaled);
    REQUIRE(x1.samples == x2.samples);
}

TEST_CASE("pair_outputs: convention, structured matrices, rail permutations", "[ica]") {
    Rng rng(5150);
    Complex4 m;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            m(i, j) = std::complex<double>(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));

    const auto rep = pair_outputs(complex_to_real8(m));
    CHECK(rep.structured);
    CHECK(rep.residual < 1e-9);
    for (int c = 0; c < 4; ++c) {
        CHECK(rep.pairs[c][0] == 2 * c);
        CHECK(rep.pairs[c][1] == 2 * c + 1);
    }

    // Permute rails: pairing recovers the permuted partners.
    std::array<int, 8> perm = {3, 6, 0, 5, 2, 7, 1, 4};
    Real8 w = complex_to_real8(m);
    Real8 wp;
    for (int i = 0; i < 8; ++i)
        wp.row(i) = w.row(perm[i]);
    const auto repp = pair_outputs(wp);
    CHECK_FALSE(repp.structured);
    CHECK(repp.residual < 1e-9);
    // Expected partners: rows holding {0,1}, {2,3}, {4,5}, {6,7}.
    std::array<int, 8> where{};
    for (int i = 0; i < 8; ++i)
        where[static_cast<std::size_t>(perm[i])] = i;
    for (int c = 0; c < 4; ++c) {
        const int ri = where[2 * c], rq = where[2 * c + 1];
        bool found = false;
        for (const auto& pr : repp.pairs)
            if ((pr[0] == ri && pr[1] == rq) || (pr[0] == rq && pr[1] == ri))
                found = true;
        REQUIRE(found);
    }
}
