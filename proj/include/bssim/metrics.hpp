// SPDX-License-Identifier: Apache-2.0
//
// bssim: behavioral model of an 8x8 mixed-signal matrix multiplier and the
// blind source separation experiments run on it.
//
// Measurement procedures behind every reported number: Welch power spectra,
// cross-channel separation in dBc, SIR / Amari separation quality, IM3,
// compression, -3 dB bandwidth and noise floor.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "bssim/chipmodel.hpp"
#include "bssim/fft.hpp"
#include "bssim/mixing.hpp"
#include "bssim/signalgen.hpp"
#include "bssim/stream.hpp"

namespace bssim {

enum class WindowKind { Hann, Rect };

inline std::string to_string(WindowKind w) {
    return w == WindowKind::Hann ? "hann" : "rect";
}

/// Welch-averaged power spectrum. Bin values are calibrated as bin *power*
/// (V^2): summing bins across a band returns the band's mean-square power,
/// so a sine's leakage cluster integrates to its true RMS power.
struct Spectrum {
    std::vector<double> freqs;    // Hz, strictly increasing
    std::vector<double> power;    // linear bin power, V^2
    std::vector<double> power_db; // 10*log10(power), dB re 1 V RMS
    double resolution_bw = 0.0;   // bin spacing, Hz
    WindowKind window = WindowKind::Hann;
    int averages = 0;

    /// dBm in 50 ohm for a dB-re-1V^2 value.
    static double db_to_dbm(double db) { return db + 10.0 * std::log10(1000.0 / 50.0); }

    std::size_t size() const { return freqs.size(); }

    std::size_t bin_of(double f) const {
        const auto it = std::lower_bound(freqs.begin(), freqs.end(), f);
        if (it == freqs.end())
            return freqs.size() - 1;
        if (it == freqs.begin())
            return 0;
        const auto hi = static_cast<std::size_t>(it - freqs.begin());
        return (f - freqs[hi - 1] < freqs[hi] - f) ? hi - 1 : hi;
    }

    /// Integrated power over [f_lo, f_hi], inclusive of boundary bins.
    double band_power(double f_lo, double f_hi) const {
        if (!(f_lo <= f_hi))
            throw std::invalid_argument("band_power: empty band");
        double acc = 0.0;
        for (std::size_t k = 0; k < freqs.size(); ++k)
            if (freqs[k] >= f_lo && freqs[k] <= f_hi)
                acc += power[k];
        return acc;
    }

    double band_power_db(double f_lo, double f_hi) const {
        return 10.0 * std::log10(std::max(band_power(f_lo, f_hi), 1.0e-300));
    }

    /// Power integrated over +/- half_bins around bin k.
    double cluster_power(std::size_t k, int half_bins = 3) const {
        const auto lo = k >= static_cast<std::size_t>(half_bins) ? k - half_bins : 0;
        const auto hi = std::min(k + static_cast<std::size_t>(half_bins), freqs.size() - 1);
        double acc = 0.0;
        for (std::size_t i = lo; i <= hi; ++i)
            acc += power[i];
        return acc;
    }

    std::size_t peak_bin() const {
        return static_cast<std::size_t>(
            std::max_element(power.begin(), power.end()) - power.begin());
    }
};

namespace detail {

inline std::vector<double> make_window(WindowKind kind, std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (kind == WindowKind::Hann)
        for (std::size_t i = 0; i < n; ++i)
            w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) /
                                         static_cast<double>(n)));
    return w;
}

/// Shared Welch driver. `fetch(t)` returns the complex sample at index t.
template <typename Fetch>
std::vector<double> welch_accumulate(Fetch fetch, std::size_t n_total, std::size_t nfft,
                                     WindowKind kind, double overlap, int& averages_out,
                                     double& winsum_sq_out) {
    if (!is_power_of_two(nfft))
        throw std::invalid_argument("power_spectrum: nfft must be a power of two");
    if (n_total < nfft)
        throw std::invalid_argument("power_spectrum: stream shorter than nfft");
    if (!(overlap >= 0.0 && overlap < 1.0))
        throw std::invalid_argument("power_spectrum: overlap must lie in [0, 1)");

    const auto hop = std::max<std::size_t>(
        static_cast<std::size_t>(std::lround(static_cast<double>(nfft) * (1.0 - overlap))), 1);
    const auto w = make_window(kind, nfft);
    double wss = 0.0;
    for (double v : w)
        wss += v * v;
    winsum_sq_out = wss;

    std::vector<double> acc(nfft, 0.0);
    std::vector<std::complex<double>> buf(nfft);
    int segments = 0;
    for (std::size_t start = 0; start + nfft <= n_total; start += hop) {
        for (std::size_t i = 0; i < nfft; ++i)
            buf[i] = fetch(start + i) * w[i];
        fft_inplace(buf);
        for (std::size_t k = 0; k < nfft; ++k)
            acc[k] += std::norm(buf[k]);
        ++segments;
    }
    for (auto& v : acc)
        v /= static_cast<double>(segments);
    averages_out = segments;
    return acc;
}

inline void finish_db(Spectrum& s) {
    s.power_db.resize(s.power.size());
    for (std::size_t k = 0; k < s.power.size(); ++k)
        s.power_db[k] = 10.0 * std::log10(std::max(s.power[k], 1.0e-300));
}

} // namespace detail

/// Two-sided spectrum of a complex stream, frequencies in [-fs/2, fs/2).
inline Spectrum power_spectrum(const ComplexStream& x, std::size_t nfft = 65536,
                               WindowKind window = WindowKind::Hann, double overlap = 0.5) {
    x.validate();
    Spectrum s;
    s.window = window;
    s.resolution_bw = x.sample_rate / static_cast<double>(nfft);
    double wss = 0.0;
    auto raw = detail::welch_accumulate(
        [&x](std::size_t t) {
            return std::complex<double>(x.i_samples[t], x.q_samples[t]);
        },
        x.size(), nfft, window, overlap, s.averages, wss);
    const double scale = 1.0 / (static_cast<double>(nfft) * wss);
    s.freqs.resize(nfft);
    s.power.resize(nfft);
    const auto half = nfft / 2;
    for (std::size_t k = 0; k < nfft; ++k) {
        const std::size_t src = (k + half) % nfft; // fftshift
        s.freqs[k] = (static_cast<double>(k) - static_cast<double>(half)) * s.resolution_bw;
        s.power[k] = raw[src] * scale;
    }
    detail::finish_db(s);
    return s;
}

/// One-sided spectrum of a real stream, frequencies in [0, fs/2].
inline Spectrum power_spectrum_real(const std::vector<double>& x, double fs,
                                    std::size_t nfft = 65536,
                                    WindowKind window = WindowKind::Hann, double overlap = 0.5) {
    Spectrum s;
    s.window = window;
    s.resolution_bw = fs / static_cast<double>(nfft);
    double wss = 0.0;
    auto raw = detail::welch_accumulate(
        [&x](std::size_t t) { return std::complex<double>(x[t], 0.0); }, x.size(), nfft, window,
        overlap, s.averages, wss);
    const double scale = 1.0 / (static_cast<double>(nfft) * wss);
    const auto half = nfft / 2;
    s.freqs.resize(half + 1);
    s.power.resize(half + 1);
    for (std::size_t k = 0; k <= half; ++k) {
        s.freqs[k] = static_cast<double>(k) * s.resolution_bw;
        const double fold = (k == 0 || k == half) ? 1.0 : 2.0;
        s.power[k] = fold * raw[k] * scale;
    }
    detail::finish_db(s);
    return s;
}

// ---------------------------------------------------------------------------
// Separation quality
// ---------------------------------------------------------------------------

struct SeparationReport {
    int target_channel = 0; // 0-based complex channel index
    double target_power_db = 0.0;
    double worst_other_db = 0.0;
    double separation_dbc = 0.0;
    double in_channel_sfdr_dbc = 0.0;
    std::array<int, 4> permutation = {0, 1, 2, 3};
    std::array<double, 4> per_channel_sir_db = {0.0, 0.0, 0.0, 0.0};
    double amari_index = 0.0;
};

/// Cross-channel separation: integrated in-band power of the target complex
/// channel against the worst other channel in the same band, plus the
/// in-channel SFDR (band power over the strongest out-of-band spur cluster).
inline SeparationReport separation_dbc(const std::array<ComplexStream, 4>& y, int target,
                                       double band_lo, double band_hi,
                                       std::size_t nfft = 65536) {
    if (target < 0 || target > 3)
        throw std::invalid_argument("separation_dbc: target channel out of range");
    if (!(band_lo < band_hi))
        throw std::invalid_argument("separation_dbc: empty signal band");
    SeparationReport rep;
    rep.target_channel = target;
    std::array<Spectrum, 4> spec;
    for (int c = 0; c < 4; ++c)
        spec[c] = power_spectrum(y[static_cast<std::size_t>(c)], nfft);

    rep.target_power_db = spec[target].band_power_db(band_lo, band_hi);
    double worst = -1.0e300;
    for (int c = 0; c < 4; ++c) {
        if (c == target)
            continue;
        worst = std::max(worst, spec[c].band_power_db(band_lo, band_hi));
    }
    rep.worst_other_db = worst;
    rep.separation_dbc = rep.target_power_db - rep.worst_other_db;

    // Largest spur cluster in the target channel outside the signal band.
    const Spectrum& ts = spec[target];
    double spur = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        if (ts.freqs[k] >= band_lo - 3.0 * ts.resolution_bw &&
            ts.freqs[k] <= band_hi + 3.0 * ts.resolution_bw)
            continue;
        if (ts.power[k] > spur)
            spur = ts.cluster_power(k);
    }
    rep.in_channel_sfdr_dbc =
        rep.target_power_db - 10.0 * std::log10(std::max(spur, 1.0e-300));
    return rep;
}

/// Permutation/scale-invariant mixing quality of G = W*A on |G|; 0 iff G is
/// a scaled permutation, 1 for the all-ones matrix. Accepts real or complex
/// square matrices.
template <typename Derived>
double amari_index(const Eigen::MatrixBase<Derived>& g) {
    const auto n = g.rows();
    if (n != g.cols() || n < 2)
        throw std::invalid_argument("amari_index: square matrix of size >= 2 required");
    const Eigen::MatrixXd p = g.cwiseAbs().template cast<double>();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (p.row(i).maxCoeff() <= 0.0 || p.col(i).maxCoeff() <= 0.0)
            throw std::invalid_argument("amari_index: zero row or column");
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        acc += p.row(i).sum() / p.row(i).maxCoeff() - 1.0;
    for (Eigen::Index j = 0; j < n; ++j)
        acc += p.col(j).sum() / p.col(j).maxCoeff() - 1.0;
    return acc / static_cast<double>(2 * n * (n - 1));
}

struct SirResult {
    Complex4 g;                        // W * A in complex form
    std::array<int, 4> permutation;    // source assigned to each output channel
    std::array<double, 4> sir_db;      // capped at 200 dB
    double structure_residual = 0.0;   // non-complex part of W * A
};

inline constexpr double kSirCapDb = 200.0;

/// Ground-truth separation quality: G = W_loaded * A as a 4x4 complex
/// matrix, greedy best assignment on |G|, per-channel SIR.
inline SirResult sir_matrix(const Real8& w_loaded, const MixingMatrix& a) {
    SirResult r;
    const Real8 g8 = w_loaded * a.real_form;
    auto [gc, resid] = real8_to_complex(g8);
    r.g = gc;
    r.structure_residual = resid;

    Eigen::Matrix4d mag = gc.cwiseAbs();
    std::array<bool, 4> row_used{}, col_used{};
    r.permutation = {-1, -1, -1, -1};
    for (int pick = 0; pick < 4; ++pick) {
        int bi = -1, bj = -1;
        double best = -1.0;
        for (int i = 0; i < 4; ++i) {
            if (row_used[i])
                continue;
            for (int j = 0; j < 4; ++j) {
                if (col_used[j])
                    continue;
                if (mag(i, j) > best) {
                    best = mag(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }
        row_used[bi] = col_used[bj] = true;
        r.permutation[bi] = bj;
    }
    for (int i = 0; i < 4; ++i) {
        const int j = r.permutation[i];
        const double sig = mag(i, j) * mag(i, j);
        double intf = 0.0;
        for (int k = 0; k < 4; ++k)
            if (k != j)
                intf += mag(i, k) * mag(i, k);
        const double sir =
            intf > 0.0 ? 10.0 * std::log10(sig / intf) : std::numeric_limits<double>::infinity();
        r.sir_db[i] = std::min(sir, kSirCapDb);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Chip characterization
// ---------------------------------------------------------------------------

/// Amplitude of the component at frequency f, by coherent correlation over
/// an integer number of periods (exact for tones, no window leakage).
inline double tone_amplitude(const std::vector<double>& x, double fs, double f,
                             std::size_t skip = 0) {
    if (skip >= x.size())
        throw std::invalid_argument("tone_amplitude: skip exceeds stream");
    const std::size_t avail = x.size() - skip;
    std::size_t m = avail;
    if (f > 0.0) {
        const double periods = std::floor(static_cast<double>(avail) * f / fs);
        if (periods >= 1.0)
            m = static_cast<std::size_t>(std::floor(periods * fs / f));
    }
    const double w = 2.0 * M_PI * f / fs;
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
        const double v = x[skip + t];
        const double ph = w * static_cast<double>(t);
        re += v * std::cos(ph);
        im -= v * std::sin(ph);
    }
    const double norm = f > 0.0 ? 2.0 / static_cast<double>(m) : 1.0 / static_cast<double>(m);
    return std::hypot(re, im) * norm;
}

namespace detail {

/// Identity weight matrix at the DAC's realizable unit (4095/4096 after
/// quantization of 1.0).
inline Real8 identity_weights() { return Real8::Identity(); }

/// Drives prebuilt rails through a cloned chip and returns row 0 of the
/// output with the blanking prefix and settle margin dropped.
inline std::vector<double> drive_row0(const ChipConfig& cfg, const RailStreams& x, double fs,
                                      std::size_t settle) {
    ChipInstance chip(cfg);
    chip.load_weights(identity_weights(), fs);
    Rng noise(derive_seed(cfg.seed, 0x63686172)); // "char"
    ChipOutput out = chip.apply(x, noise);
    const auto drop = std::max<std::size_t>(static_cast<std::size_t>(out.invalid_prefix), settle);
    const auto n = static_cast<std::size_t>(out.y.samples.cols());
    if (drop >= n)
        throw std::invalid_argument("characterization: stream too short after settling");
    std::vector<double> row(n - drop);
    for (std::size_t t = 0; t < row.size(); ++t)
        row[t] = out.y.samples(0, static_cast<Eigen::Index>(t + drop));
    return row;
}

inline RailStreams tones_on_rail0(const std::vector<double>& freqs, double amp_per_tone,
                                  double fs, std::size_t n) {
    RailStreams x;
    x.sample_rate = fs;
    x.samples = Eigen::MatrixXd::Zero(8, static_cast<Eigen::Index>(n));
    for (std::size_t t = 0; t < n; ++t) {
        double v = 0.0;
        for (double f : freqs)
            v += amp_per_tone * std::cos(2.0 * M_PI * f * static_cast<double>(t) / fs);
        x.samples(0, static_cast<Eigen::Index>(t)) = v;
    }
    return x;
}

} // namespace detail

/// Two-tone IM3 through an identity-weight row: drives rail 0 with the tone
/// sum and reports the larger of the products at 2f1-f2 and 2f2-f1 relative
/// to either tone, in dBc (band-integrated Welch measurement).
inline double im3_test(const ChipInstance& chip, double f1, double f2, double per_tone_vpp,
                       double fs, std::size_t n_samples = 1u << 20, std::size_t nfft = 65536) {
    if (f1 == f2)
        throw std::invalid_argument("im3_test: tones must differ");
    const double p_lo = 2.0 * f1 - f2, p_hi = 2.0 * f2 - f1;
    const double rbw = fs / static_cast<double>(nfft);
    for (double p : {p_lo, p_hi}) {
        if (!(std::abs(p) < fs / 2.0))
            throw std::invalid_argument("im3_test: IM3 product outside Nyquist band");
        if (std::abs(p - f1) < 8.0 * rbw || std::abs(p - f2) < 8.0 * rbw)
            throw std::invalid_argument("im3_test: IM3 product collides with a tone bin");
    }
    const double amp = per_tone_vpp / 2.0;
    const auto x = detail::tones_on_rail0({f1, f2}, amp, fs, n_samples);
    const auto row = detail::drive_row0(chip.config(), x, fs, 8192);

    const Spectrum s = power_spectrum_real(row, fs, nfft);
    const double half = 4.0 * rbw;
    const double tone_p = s.band_power(f1 - half, f1 + half);
    const double im3_p = std::max(s.band_power(std::abs(p_lo) - half, std::abs(p_lo) + half),
                                  s.band_power(std::abs(p_hi) - half, std::abs(p_hi) + half));
    return 10.0 * std::log10(im3_p / tone_p);
}

/// Swept-tone gain through an identity-weight row at small drive, with
/// bisection for the -3 dB frequency relative to the low-frequency gain.
inline double bandwidth_3db(const ChipInstance& chip, FilterMode mode, double fs,
                            std::size_t n_samples = 1u << 16) {
    ChipConfig cfg = chip.config();
    cfg.filter_mode = mode;
    const double corner = cfg.analog_corner();
    if (!(fs > 4.0 * corner))
        throw std::invalid_argument("bandwidth_3db: sample rate must exceed 4x the corner");

    const double amp = 0.025; // small drive keeps the cubic term negligible
    const auto gain_at = [&](double f) {
        const auto x = detail::tones_on_rail0({f}, amp, fs, n_samples);
        const auto row = detail::drive_row0(cfg, x, fs, 8192);
        return tone_amplitude(row, fs, f);
    };
    const double f_ref = corner / 50.0;
    const double target = gain_at(f_ref) / std::sqrt(2.0);

    double lo = f_ref, hi = std::min(0.49 * fs / 2.0, 50.0 * corner);
    if (gain_at(hi) > target)
        throw std::invalid_argument("bandwidth_3db: -3 dB point beyond measurable range");
    for (int it = 0; it < 40 && (hi - lo) / hi > 1.0e-4; ++it) {
        const double mid = 0.5 * (lo + hi);
        (gain_at(mid) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Gain at the requested drive minus small-signal gain (40 dB below), in
/// dB; negative values mean compression.
inline double compression_test(const ChipInstance& chip, double freq, double vpp, double fs,
                               std::size_t n_samples = 1u << 18) {
    const auto gain_at = [&](double drive_vpp) {
        const auto x = detail::tones_on_rail0({freq}, drive_vpp / 2.0, fs, n_samples);
        const auto row = detail::drive_row0(chip.config(), x, fs, 8192);
        return tone_amplitude(row, fs, freq) / (drive_vpp / 2.0);
    };
    const double g_small = gain_at(vpp / 100.0); // -40 dB reference drive
    const double g_test = gain_at(vpp);
    return 20.0 * std::log10(g_test / g_small);
}

/// Output RMS per row with zero weights and grounded inputs, averaged over
/// rows, excluding load-blanked samples.
inline double noise_floor(const ChipInstance& chip, double duration, double fs) {
    const auto n = static_cast<std::size_t>(std::llround(duration * fs));
    ChipInstance clone(chip.config());
    clone.load_weights(Real8::Zero(), fs);
    Rng noise(derive_seed(chip.config().seed, 0x6e6f6973)); // "nois"
    RailStreams x;
    x.sample_rate = fs;
    x.samples = Eigen::MatrixXd::Zero(8, static_cast<Eigen::Index>(n));
    ChipOutput out = clone.apply(x, noise);
    const auto start = out.invalid_prefix;
    const auto cols = out.y.samples.cols() - start;
    if (cols <= 0)
        throw std::invalid_argument("noise_floor: duration shorter than blanking window");
    double acc = 0.0;
    for (int r = 0; r < 8; ++r)
        acc += std::sqrt(out.y.samples.row(r).tail(cols).squaredNorm() /
                         static_cast<double>(cols));
    return acc / 8.0;
}

} // namespace bssim
