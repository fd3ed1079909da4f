// SPDX-License-Identifier: Apache-2.0
//
// bssim: behavioral model of an 8x8 mixed-signal matrix multiplier and the
// blind source separation experiments run on it.
//
// Stochastic-gradient infomax for sub-Gaussian sources, run hardware-in-the-
// loop against the chip model: scale rows, quantize, load, observe Y,
// update W digitally.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bssim/chipmodel.hpp"
#include "bssim/metrics.hpp"
#include "bssim/mixing.hpp"
#include "bssim/rng.hpp"
#include "bssim/stream.hpp"

namespace bssim {

enum class IcaRule { ExtendedInfomaxSubGaussian, CubicNonlinearity };

struct IcaConfig {
    IcaRule rule = IcaRule::ExtendedInfomaxSubGaussian;
    double lr_initial = 0.01;
    double lr_decay = 0.01; // lr(k) = lr_initial / (1 + lr_decay * k)
    int batch_samples = 8192;
    int max_epochs = 500;
    bool complex_structured = true;
    bool whiten = true;
    double convergence_tol = 1.0e-6; // on the relative update norm
    double init_perturbation = 0.0;  // seeded symmetry-breaking on W0
    std::uint64_t seed = 1;
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double update_norm = 0.0;  // ||dW||_F / ||W||_F
    double stationarity = 0.0; // ||I + E[g(y) y^T] - E[y y^T]||_F on the batch
    double amari = std::numeric_limits<double>::quiet_NaN(); // when A is known
};

struct UnmixState {
    Eigen::MatrixXd W;          // unconstrained working copy
    Eigen::VectorXd row_scales; // digital undo of the pre-load row normalization
    double lr = 0.0;
    int iteration = 0;
    bool converged = false;
    std::vector<EpochRecord> history;
};

/// Projects an 8x8 matrix onto the complex-structured subspace (exact
/// round trip through the 4x4 complex form).
inline Real8 project_complex_structure(const Real8& w) {
    return complex_to_real8(real8_to_complex(w).first);
}

/// Symmetric whitening: V = C^(-1/2) for the sample covariance C of X
/// (rows = channels). Z = V * (X - mean) has identity covariance.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> whiten(const Eigen::MatrixXd& x) {
    const auto n = x.rows();
    const auto t = x.cols();
    if (t < 8 * n)
        throw std::invalid_argument("whiten: need at least 8x more samples than channels");
    const Eigen::VectorXd mean = x.rowwise().mean();
    const Eigen::MatrixXd xc = x.colwise() - mean;
    const Eigen::MatrixXd cov = xc * xc.transpose() / static_cast<double>(t);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const auto& ev = es.eigenvalues();
    if (ev(0) <= 1.0e-12 * ev(n - 1) || ev(0) <= 0.0)
        throw std::invalid_argument("whiten: singular covariance (degenerate mixing)");
    const Eigen::MatrixXd v = es.eigenvectors() *
                              ev.cwiseSqrt().cwiseInverse().asDiagonal() *
                              es.eigenvectors().transpose();
    return {v, v * xc};
}

/// One natural-gradient update. Sub-Gaussian extended-infomax rule:
///   dW = lr * (I + E[tanh(y) y^T] - E[y y^T]) * W
/// CubicNonlinearity alternative:
///   dW = lr * (I - E[y^3 y^T]) * W
/// In complex-structured mode the updated W is projected back onto the
/// complex subspace. Returns the record appended to state.history.
inline const EpochRecord& infomax_step(UnmixState& state, const Eigen::MatrixXd& y_batch,
                                       const IcaConfig& cfg) {
    const auto n = state.W.rows();
    if (y_batch.rows() != n)
        throw std::invalid_argument("infomax_step: batch channel count mismatch");
    if (y_batch.cols() < 1)
        throw std::invalid_argument("infomax_step: empty batch");
    if (!y_batch.allFinite())
        throw std::invalid_argument("infomax_step: non-finite values in batch");
    if (cfg.complex_structured && n != 8)
        throw std::invalid_argument("infomax_step: complex-structured mode requires 8 rails");

    const double b = static_cast<double>(y_batch.cols());
    Eigen::MatrixXd k;
    if (cfg.rule == IcaRule::ExtendedInfomaxSubGaussian) {
        k = Eigen::MatrixXd::Identity(n, n) +
            (y_batch.array().tanh().matrix() * y_batch.transpose()) / b -
            (y_batch * y_batch.transpose()) / b;
    } else {
        k = Eigen::MatrixXd::Identity(n, n) -
            (y_batch.array().cube().matrix() * y_batch.transpose()) / b;
    }

    const Eigen::MatrixXd dw = state.lr * k * state.W;
    EpochRecord rec;
    rec.epoch = state.iteration;
    rec.lr = state.lr;
    rec.stationarity = k.norm();
    const double wnorm = state.W.norm();
    rec.update_norm = wnorm > 0.0 ? dw.norm() / wnorm : 0.0;

    state.W += dw;
    if (cfg.complex_structured)
        state.W = project_complex_structure(state.W);
    state.iteration += 1;
    state.lr = cfg.lr_initial / (1.0 + cfg.lr_decay * static_cast<double>(state.iteration));
    state.history.push_back(rec);
    return state.history.back();
}

/// Scales each row of W so its largest |entry| is 4095/4096 (full DAC
/// range); returns the scaled matrix and the per-row undo factors
/// (algorithm weight = row_scale * physical weight).
inline std::pair<Real8, Eigen::VectorXd> scale_rows_to_dac(const Real8& w) {
    Real8 scaled;
    Eigen::VectorXd undo(8);
    constexpr double kTop = 4095.0 / 4096.0;
    for (int i = 0; i < 8; ++i) {
        const double m = w.row(i).cwiseAbs().maxCoeff();
        if (!(m > 0.0))
            throw std::invalid_argument("scale_rows_to_dac: zero row in W");
        scaled.row(i) = w.row(i) * (kTop / m);
        undo(i) = m / kTop;
    }
    return {scaled, undo};
}

/// W as the metrics see it: digital row scales times the dequantized
/// physical DAC values actually loaded on the chip.
inline Real8 loaded_unmixing_matrix(const ChipInstance& chip, const UnmixState& state) {
    return state.row_scales.asDiagonal() * chip.loaded_values();
}

struct BssResult {
    UnmixState state;
    RailStreams y; // full-stream output under the final loaded weights,
                   // row scales and configured gain undone
};

namespace detail {

/// Copies `count` columns starting at `cursor`, wrapping circularly.
inline Eigen::MatrixXd wrap_columns(const Eigen::MatrixXd& x, std::size_t cursor,
                                    std::size_t count) {
    const auto n = static_cast<std::size_t>(x.cols());
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(count));
    std::size_t written = 0;
    while (written < count) {
        const std::size_t start = (cursor + written) % n;
        const std::size_t run = std::min(count - written, n - start);
        out.middleCols(static_cast<Eigen::Index>(written), static_cast<Eigen::Index>(run)) =
            x.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(run));
        written += run;
    }
    return out;
}

} // namespace detail

/// Hardware-in-the-loop blind source separation. Per epoch: scale W rows to
/// the DAC range, load (quantize), stream the next batch through the chip,
/// discard blanked samples, undo row scales and configured gain, update W.
/// Terminates when the relative update norm drops below convergence_tol or
/// at max_epochs (returned with converged = false, not an exception).
inline BssResult run_bss(const RailStreams& x, ChipInstance& chip, const IcaConfig& cfg,
                         double fs, const MixingMatrix* ground_truth = nullptr) {
    if (x.rails() != 8)
        throw std::invalid_argument("run_bss: expected 8 input rails");
    if (x.sample_rate != fs)
        throw std::invalid_argument("run_bss: stream sample rate disagrees with fs");
    const int min_interval = min_interval_samples_at(fs);
    if (cfg.batch_samples < min_interval)
        throw std::invalid_argument(
            "run_bss: batch must span at least the chip's minimum weight-update interval");
    if (x.length() < cfg.batch_samples)
        throw std::invalid_argument("run_bss: stream shorter than one batch");

    // The chip's input filters run continuously and never see weight loads,
    // so the whole record is filtered once up front.
    const RailStreams xf = filter_rails(chip.config(), x);

    UnmixState state;
    state.W = Eigen::MatrixXd::Identity(8, 8);
    state.row_scales = Eigen::VectorXd::Ones(8);
    state.lr = cfg.lr_initial;
    if (cfg.whiten) {
        auto [v, z] = whiten(xf.samples);
        state.W = v;
    }
    if (cfg.init_perturbation > 0.0) {
        Rng prng(derive_seed(cfg.seed, 0x70657274)); // "pert"
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j)
                state.W(i, j) += cfg.init_perturbation * prng.gaussian();
    }
    if (cfg.complex_structured)
        state.W = project_complex_structure(state.W);

    Rng noise_rng(derive_seed(cfg.seed, 0x6e6f6973)); // "nois"
    const double gain = chip.config().row_gain_linear();
    const auto n_total = static_cast<std::size_t>(xf.length());
    std::size_t cursor = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        auto [scaled, undo] = scale_rows_to_dac(state.W);
        state.row_scales = undo;
        chip.load_weights(scaled, fs);

        RailStreams batch;
        batch.sample_rate = fs;
        batch.samples =
            detail::wrap_columns(xf.samples, cursor, static_cast<std::size_t>(cfg.batch_samples));
        cursor = (cursor + static_cast<std::size_t>(cfg.batch_samples)) % n_total;

        ChipOutput out = chip.apply_prefiltered(batch, noise_rng);
        const auto valid = out.y.samples.cols() - out.invalid_prefix;
        if (valid < 1)
            throw std::invalid_argument("run_bss: batch fully blanked by weight load");
        Eigen::MatrixXd y_used = out.y.samples.rightCols(valid);
        for (int i = 0; i < 8; ++i)
            y_used.row(i) *= state.row_scales(i) / gain;

        const EpochRecord& rec = infomax_step(state, y_used, cfg);
        if (ground_truth) {
            const Real8 g8 = state.W * ground_truth->real_form;
            state.history.back().amari = amari_index(real8_to_complex(g8).first);
        }
        if (rec.update_norm < cfg.convergence_tol) {
            state.converged = true;
            break;
        }
    }

    // Full-stream output under the final weights.
    auto [scaled, undo] = scale_rows_to_dac(state.W);
    state.row_scales = undo;
    chip.load_weights(scaled, fs);
    ChipOutput out = chip.apply_prefiltered(xf, noise_rng);
    BssResult res;
    res.state = std::move(state);
    res.y.sample_rate = fs;
    res.y.samples = out.y.samples.rightCols(out.y.samples.cols() - out.invalid_prefix);
    for (int i = 0; i < 8; ++i)
        res.y.samples.row(i) *= res.state.row_scales(i) / gain;
    return res;
}

struct IdealBssResult {
    UnmixState state;
    Eigen::MatrixXd y;
};

/// Same update loop over an ideal linear path (y = W x, no chip): the
/// algorithm-floor ablation and the reduced-dimension oracle path.
inline IdealBssResult run_bss_ideal(const Eigen::MatrixXd& x, const IcaConfig& cfg,
                                    const Eigen::MatrixXd* ground_truth = nullptr) {
    const auto n = x.rows();
    if (x.cols() < cfg.batch_samples)
        throw std::invalid_argument("run_bss_ideal: stream shorter than one batch");
    if (cfg.complex_structured && n != 8)
        throw std::invalid_argument("run_bss_ideal: complex-structured mode requires 8 rails");

    UnmixState state;
    state.W = Eigen::MatrixXd::Identity(n, n);
    state.row_scales = Eigen::VectorXd::Ones(n);
    state.lr = cfg.lr_initial;
    if (cfg.whiten) {
        auto [v, z] = whiten(x);
        state.W = v;
    }
    if (cfg.init_perturbation > 0.0) {
        Rng prng(derive_seed(cfg.seed, 0x70657274));
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                state.W(i, j) += cfg.init_perturbation * prng.gaussian();
    }
    if (cfg.complex_structured)
        state.W = project_complex_structure(state.W);

    const auto n_total = static_cast<std::size_t>(x.cols());
    std::size_t cursor = 0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const Eigen::MatrixXd batch =
            detail::wrap_columns(x, cursor, static_cast<std::size_t>(cfg.batch_samples));
        cursor = (cursor + static_cast<std::size_t>(cfg.batch_samples)) % n_total;
        const Eigen::MatrixXd y = state.W * batch;
        const EpochRecord& rec = infomax_step(state, y, cfg);
        if (ground_truth)
            state.history.back().amari = amari_index(
                Eigen::MatrixXcd((state.W * *ground_truth).cast<std::complex<double>>()));
        if (rec.update_norm < cfg.convergence_tol) {
            state.converged = true;
            break;
        }
    }
    IdealBssResult res;
    res.y = state.W * x;
    res.state = std::move(state);
    return res;
}

// ---------------------------------------------------------------------------
// Output pairing
// ---------------------------------------------------------------------------

struct PairingReport {
    std::array<std::array<int, 2>, 4> pairs; // rail indices, 0-based
    double residual = 0.0;                   // 1 - worst quadrature coherence
    bool structured = false;                 // matched the fixed rail convention
};

/// Maps the 8 real output rails to 4 complex channels. A complex-structured
/// W uses the fixed rail convention; otherwise rails are paired by maximal
/// quadrature coherence (90-degree-rotated row correlation).
inline PairingReport pair_outputs(const Real8& w) {
    PairingReport rep;
    const double structure_resid = real8_to_complex(w).second;
    if (structure_resid < 1.0e-9) {
        rep.structured = true;
        rep.residual = structure_resid;
        for (int c = 0; c < 4; ++c)
            rep.pairs[c] = {2 * c, 2 * c + 1};
        return rep;
    }

    // J rotates a stacked rail vector by 90 degrees per complex pair; for a
    // structured matrix, Q rows equal J * (I row).
    const auto rotate = [](const Eigen::RowVectorXd& u) {
        Eigen::RowVectorXd r(8);
        for (int k = 0; k < 4; ++k) {
            r(2 * k) = -u(2 * k + 1);
            r(2 * k + 1) = u(2 * k);
        }
        return r;
    };
    Eigen::Matrix<double, 8, 8> score = Eigen::Matrix<double, 8, 8>::Zero();
    for (int i = 0; i < 8; ++i) {
        const Eigen::RowVectorXd ri = rotate(w.row(i));
        for (int j = 0; j < 8; ++j) {
            if (i == j)
                continue;
            const double den = w.row(i).norm() * w.row(j).norm();
            score(i, j) = den > 0.0 ? std::abs(ri.dot(w.row(j))) / den : 0.0;
        }
    }
    std::array<bool, 8> used{};
    double worst = 1.0;
    for (int c = 0; c < 4; ++c) {
        int bi = -1, bj = -1;
        double best = -1.0;
        for (int i = 0; i < 8; ++i) {
            if (used[i])
                continue;
            for (int j = i + 1; j < 8; ++j) {
                if (used[j])
                    continue;
                const double s = std::max(score(i, j), score(j, i));
                if (s > best) {
                    best = s;
                    bi = i;
                    bj = j;
                }
            }
        }
        used[bi] = used[bj] = true;
        rep.pairs[c] = {bi, bj};
        worst = std::min(worst, best);
    }
    rep.residual = 1.0 - worst;
    return rep;
}

} // namespace bssim
