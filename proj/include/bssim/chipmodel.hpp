// SPDX-License-Identifier: Apache-2.0
//
// bssim: behavioral model of an 8x8 mixed-signal matrix multiplier and the
// blind source separation experiments run on it.
//
// Behavioral chip model: 13-bit hybrid capacitor-resistor weight DACs with
// unit-element mismatch, six-pole input filters or a one-pole pass-through,
// feedback-cap and PGA gain, a memoryless cubic nonlinearity, additive
// output noise, and weight-load blanking.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bssim/rng.hpp"
#include "bssim/stream.hpp"

namespace bssim {

// Weight-update timing measured on the chip.
inline constexpr double kWeightLoadResetSeconds = 256.0e-9;
inline constexpr double kWeightUpdateIntervalSeconds = 3.564e-6;

inline int blanked_samples_at(double fs) {
    return static_cast<int>(std::ceil(kWeightLoadResetSeconds * fs - 1.0e-9));
}

inline int min_interval_samples_at(double fs) {
    return static_cast<int>(std::ceil(kWeightUpdateIntervalSeconds * fs - 1.0e-9));
}

// ---------------------------------------------------------------------------
// Weight codes
// ---------------------------------------------------------------------------

/// Sign + 6-bit MSB (thermometer capacitor array) + 6-bit LSB (thermometer
/// resistor array). Magnitude codes span 0..4095 of a 4096 full scale.
struct WeightCode {
    bool sign = false; // true = negative
    std::uint8_t msb = 0;
    std::uint8_t lsb = 0;

    int magnitude() const { return int(msb) * 64 + int(lsb); }

    double ideal_value() const {
        const double v = static_cast<double>(magnitude()) / 4096.0;
        return sign ? -v : v;
    }

    bool valid() const { return msb < 64 && lsb < 64; }
};

/// Round-half-away-from-zero quantization to sign + 12-bit magnitude,
/// saturating at +/-4095/4096.
inline WeightCode quantize_weight(double w) {
    WeightCode c;
    c.sign = w < 0.0;
    const double mag = std::abs(w) * 4096.0;
    auto q = static_cast<long>(std::floor(mag + 0.5));
    if (q > 4095)
        q = 4095;
    c.msb = static_cast<std::uint8_t>(q / 64);
    c.lsb = static_cast<std::uint8_t>(q % 64);
    return c;
}

struct QuantizedMatrix {
    std::array<std::array<WeightCode, 8>, 8> codes;
};

// ---------------------------------------------------------------------------
// Mismatch
// ---------------------------------------------------------------------------

/// One drawn realization of the chip's analog errors: per-DAC unit-capacitor
/// errors (64 units for each of the 64 DACs) and per-row gain errors.
/// cap_error_cumsum[d][m] = sum of the first m unit errors for DAC d, so
/// dac_value stays O(1) during exhaustive sweeps.
struct MismatchRealization {
    std::array<std::array<double, 64>, 64> cap_errors{};
    std::array<std::array<double, 65>, 64> cap_error_cumsum{};
    std::array<double, 8> row_gain_errors{};
    std::uint64_t seed = 0;

    /// Worst-case integral nonlinearity of DAC d over all magnitude codes,
    /// as a fraction of full scale.
    double inl_of(int d) const {
        double worst = 0.0;
        for (int m = 0; m <= 64; ++m)
            worst = std::max(worst, std::abs(cap_error_cumsum[d][m]));
        return worst / 64.0;
    }
};

/// Transfer value of one multiplying DAC for a weight code under a mismatch
/// realization. The MSB thermometer array contributes its enabled unit
/// capacitors; the LSB resistor array interpolates across the next unit, so
/// the curve is ideal when all unit errors are zero and odd-symmetric in
/// the sign bit.
inline double dac_value(const WeightCode& code, const MismatchRealization& mm, int dac_index) {
    if (!code.valid())
        throw std::invalid_argument("dac_value: invalid weight code");
    const auto& cum = mm.cap_error_cumsum[dac_index];
    const auto& eps = mm.cap_errors[dac_index];
    const int m = code.msb;
    const double lsb_frac = static_cast<double>(code.lsb) / 64.0;
    const double v =
        (static_cast<double>(m) + cum[m] + (1.0 + eps[m]) * lsb_frac) / 64.0;
    return code.sign ? -v : v;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class FilterMode { SixPole, PassThrough };

/// a3 such that a 1 Vpp-per-tone two-tone drive produces IM3 products at
/// `im3_dbc` relative to either tone: |IM3|/A = (3/4) a3 A^2.
inline double calibrated_a3(double im3_dbc = -63.0, double per_tone_amplitude = 0.5) {
    return (4.0 / 3.0) * std::pow(10.0, im3_dbc / 20.0) /
           (per_tone_amplitude * per_tone_amplitude);
}

struct ChipConfig {
    FilterMode filter_mode = FilterMode::SixPole;
    double fb_gain_db = 0.0;           // feedback-cap gain: 0 or 6 dB
    double pga_gain_db = 0.0;          // programmable gain: 0..24 dB in 6 dB steps
    double noise_vrms = 0.15e-3;       // output-referred RMS noise per row
    double a3 = calibrated_a3();       // cubic coefficient at the row summing node
    double passthrough_bw = 15.4e6;    // Hz, -3 dB of the pass-through amplifier
    double filter_cutoff = 6.5e6;      // Hz, six-pole filter cut-off
    double full_scale_vpp = 1.0;       // input full scale
    double unit_cap_mismatch = 0.01;   // uniform bound on unit-capacitor errors
    double row_gain_mismatch = 0.004;  // uniform bound on per-row gain errors
    std::uint64_t seed = 1;

    double row_gain_linear() const {
        return std::pow(10.0, (fb_gain_db + pga_gain_db) / 20.0);
    }

    double analog_corner() const {
        return filter_mode == FilterMode::PassThrough ? passthrough_bw : filter_cutoff;
    }

    void validate() const {
        if (fb_gain_db != 0.0 && fb_gain_db != 6.0)
            throw std::invalid_argument("chip: fb_gain_db must be 0 or 6");
        const bool pga_ok = pga_gain_db == 0.0 || pga_gain_db == 6.0 || pga_gain_db == 12.0 ||
                            pga_gain_db == 18.0 || pga_gain_db == 24.0;
        if (!pga_ok)
            throw std::invalid_argument("chip: pga_gain_db must be one of 0,6,12,18,24");
        if (noise_vrms < 0.0 || noise_vrms > 0.3e-3)
            throw std::invalid_argument("chip: noise_vrms must lie in [0, 0.3e-3] V");
        if (!(passthrough_bw > 0.0) || !(filter_cutoff > 0.0))
            throw std::invalid_argument("chip: corner frequencies must be > 0");
        if (unit_cap_mismatch < 0.0 || row_gain_mismatch < 0.0)
            throw std::invalid_argument("chip: mismatch bounds must be >= 0");
        if (row_gain_mismatch >= 0.01)
            throw std::invalid_argument("chip: row gain mismatch must stay below 1%");
        if (!(full_scale_vpp > 0.0))
            throw std::invalid_argument("chip: full scale must be > 0");
    }
};

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

/// One digital biquad (normalized a0 = 1), direct form II transposed.
struct Biquad {
    double b0, b1, b2, a1, a2;

    double response_power(double f, double fs) const {
        const std::complex<double> z = std::exp(std::complex<double>(0.0, -2.0 * M_PI * f / fs));
        const std::complex<double> num = b0 + b1 * z + b2 * z * z;
        const std::complex<double> den = 1.0 + a1 * z + a2 * z * z;
        return std::norm(num / den);
    }
};

namespace detail {

inline Biquad bilinear_lp2(double fc, double fs, double q) {
    // Prewarped bilinear transform of wc^2 / (s^2 + (wc/q) s + wc^2).
    const double wc = 2.0 * M_PI * fc;
    const double k = wc / std::tan(M_PI * fc / fs);
    const double k2 = k * k, w2 = wc * wc, kw = k * wc / q;
    const double a0 = k2 + kw + w2;
    Biquad b;
    b.b0 = w2 / a0;
    b.b1 = 2.0 * w2 / a0;
    b.b2 = w2 / a0;
    b.a1 = 2.0 * (w2 - k2) / a0;
    b.a2 = (k2 - kw + w2) / a0;
    return b;
}

inline Biquad bilinear_lp1(double fc, double fs) {
    // Prewarped bilinear transform of wc / (s + wc), expressed as a biquad.
    const double wc = 2.0 * M_PI * fc;
    const double k = wc / std::tan(M_PI * fc / fs);
    const double a0 = k + wc;
    Biquad b;
    b.b0 = wc / a0;
    b.b1 = wc / a0;
    b.b2 = 0.0;
    b.a1 = (wc - k) / a0;
    b.a2 = 0.0;
    return b;
}

inline void run_biquad(const Biquad& c, const double* in, double* out, std::size_t n) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = in[i];
        const double y = c.b0 * x + s1;
        s1 = c.b1 * x - c.a1 * y + s2;
        s2 = c.b2 * x - c.a2 * y;
        out[i] = y;
    }
}

} // namespace detail

/// The pass-through amplifier's single pole as a digital section.
inline Biquad passthrough_pole(double bw, double fs) { return detail::bilinear_lp1(bw, fs); }

/// Three-biquad cascade realizing a 6th-order Butterworth low-pass with the
/// stated cut-off; unity DC gain, exact -3.01 dB at fc (prewarped design).
inline std::array<Biquad, 3> butterworth6_sections(double fc, double fs) {
    // Section quality factors 1/(2 cos(phi)), phi = 15, 45, 75 degrees.
    const std::array<double, 3> q = {0.5176380902050415, 0.7071067811865476,
                                     1.9318516525781366};
    return {detail::bilinear_lp2(fc, fs, q[0]), detail::bilinear_lp2(fc, fs, q[1]),
            detail::bilinear_lp2(fc, fs, q[2])};
}

inline double cascade_power_db(const std::array<Biquad, 3>& sections, double f, double fs) {
    double p = 1.0;
    for (const auto& s : sections)
        p *= s.response_power(f, fs);
    return 10.0 * std::log10(p);
}

/// Six-pole input filter path.
inline std::vector<double> input_filter(const std::vector<double>& x, const ChipConfig& cfg,
                                        double fs) {
    if (!(fs > 4.0 * cfg.filter_cutoff))
        throw std::invalid_argument("input_filter: sample rate must exceed 4x cutoff");
    const auto sections = butterworth6_sections(cfg.filter_cutoff, fs);
    std::vector<double> y(x.size());
    detail::run_biquad(sections[0], x.data(), y.data(), x.size());
    detail::run_biquad(sections[1], y.data(), y.data(), x.size());
    detail::run_biquad(sections[2], y.data(), y.data(), x.size());
    return y;
}

/// Pass-through path: the measured 15.4 MHz bandwidth modeled as one pole.
inline std::vector<double> passthrough(const std::vector<double>& x, const ChipConfig& cfg,
                                       double fs) {
    if (!(fs > 4.0 * cfg.passthrough_bw))
        throw std::invalid_argument("passthrough: sample rate must exceed 4x bandwidth");
    const Biquad pole = detail::bilinear_lp1(cfg.passthrough_bw, fs);
    std::vector<double> y(x.size());
    detail::run_biquad(pole, x.data(), y.data(), x.size());
    return y;
}

/// Runs every rail through the configured input path.
inline RailStreams filter_rails(const ChipConfig& cfg, const RailStreams& x) {
    RailStreams out;
    out.sample_rate = x.sample_rate;
    out.samples.resizeLike(x.samples);
    const auto n = static_cast<std::size_t>(x.length());
    std::vector<double> rail(n), filtered;
    for (Eigen::Index r = 0; r < x.rails(); ++r) {
        for (std::size_t t = 0; t < n; ++t)
            rail[t] = x.samples(r, static_cast<Eigen::Index>(t));
        filtered = cfg.filter_mode == FilterMode::SixPole ? input_filter(rail, cfg, x.sample_rate)
                                                          : passthrough(rail, cfg, x.sample_rate);
        for (std::size_t t = 0; t < n; ++t)
            out.samples(r, static_cast<Eigen::Index>(t)) = filtered[t];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Chip instance
// ---------------------------------------------------------------------------

struct LoadInfo {
    QuantizedMatrix quantized;
    int blanked_samples = 0;
    int min_interval_samples = 0;
};

struct ChipOutput {
    RailStreams y;
    Eigen::Index invalid_prefix = 0; // samples still inside the load blanking window
};

/// One chip with a drawn mismatch realization and (after load_weights) a
/// loaded weight matrix. load_weights and apply must not interleave from
/// different threads; characterization code that needs parallelism clones
/// the instance (config + seed reproduce it exactly).
class ChipInstance {
  public:
    explicit ChipInstance(const ChipConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        draw_mismatch();
    }

    const ChipConfig& config() const { return cfg_; }
    const MismatchRealization& mismatch() const { return mm_; }
    bool weights_loaded() const { return codes_.has_value(); }

    const QuantizedMatrix& codes() const {
        if (!codes_)
            throw std::logic_error("chip: no weights loaded");
        return *codes_;
    }

    /// Dequantized physical weight matrix (DAC values including mismatch).
    Real8 loaded_values() const {
        const auto& q = codes();
        Real8 w;
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j)
                w(i, j) = dac_value(q.codes[i][j], mm_, dac_index(i, j));
        return w;
    }

    static int dac_index(int row, int col) { return row * 8 + col; }

    /// Quantizes and loads a weight matrix. Every entry must already lie in
    /// [-1, 1]; callers rescale rows (and keep the scale) rather than rely
    /// on silent clamping, so ICA bookkeeping stays exact.
    LoadInfo load_weights(const Real8& w, double fs) {
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j)
                if (!(std::abs(w(i, j)) <= 1.0))
                    throw std::invalid_argument(
                        "load_weights: entries must lie in [-1, 1]; rescale rows first");
        if (codes_ && samples_since_load_ >= 0 && samples_since_load_ < min_interval_) {
            throw std::logic_error(
                "load_weights: minimum weight-update interval not respected");
        }
        LoadInfo info;
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j)
                info.quantized.codes[i][j] = quantize_weight(w(i, j));
        info.blanked_samples = blanked_samples_at(fs);
        info.min_interval_samples = min_interval_samples_at(fs);
        codes_ = info.quantized;
        blanked_ = info.blanked_samples;
        min_interval_ = info.min_interval_samples;
        samples_since_load_ = 0;
        return info;
    }

    /// Full analog path: input filter / pass-through per rail, weighted row
    /// sums, cubic nonlinearity at the summing node, row gain, additive
    /// output noise. The first samples after a load fall in the reset
    /// blanking window and are reported in invalid_prefix.
    ChipOutput apply(const RailStreams& x, Rng& noise_rng) {
        const RailStreams xf = filter_rails(cfg_, x);
        return apply_prefiltered(xf, noise_rng);
    }

    /// Same path minus the input filters; used when the caller streams one
    /// long filtered record through several weight loads (the filters run
    /// continuously on the chip and do not see weight loads).
    ChipOutput apply_prefiltered(const RailStreams& xf, Rng& noise_rng) {
        if (!codes_)
            throw std::logic_error("chip: apply before any load_weights");
        if (xf.rails() != 8)
            throw std::invalid_argument("chip: expected 8 input rails");

        ChipOutput out;
        out.y.sample_rate = xf.sample_rate;
        const Real8 w = loaded_values();
        Eigen::MatrixXd u = w * xf.samples;

        const double a3 = cfg_.a3;
        if (a3 != 0.0)
            u = u.array() - a3 * u.array().cube();

        const double g = cfg_.row_gain_linear();
        for (int i = 0; i < 8; ++i)
            u.row(i) *= g * (1.0 + mm_.row_gain_errors[i]);

        if (cfg_.noise_vrms > 0.0) {
            for (Eigen::Index t = 0; t < u.cols(); ++t)
                for (Eigen::Index r = 0; r < 8; ++r)
                    u(r, t) += cfg_.noise_vrms * noise_rng.gaussian();
        }

        out.y.samples = std::move(u);
        const long remaining = blanked_ - samples_since_load_;
        out.invalid_prefix = std::clamp<long>(remaining, 0, out.y.samples.cols());
        samples_since_load_ += out.y.samples.cols();
        return out;
    }

  private:
    void draw_mismatch() {
        Rng rng(derive_seed(cfg_.seed, 0x6d69736d)); // "mism"
        mm_.seed = cfg_.seed;
        const double u = cfg_.unit_cap_mismatch;
        const double inl_bound_units = 64.0 / 256.0; // 2^-8 of full scale
        for (int d = 0; d < 64; ++d) {
            bool ok = false;
            for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
                double cum = 0.0;
                mm_.cap_error_cumsum[d][0] = 0.0;
                double worst = 0.0;
                for (int i = 0; i < 64; ++i) {
                    mm_.cap_errors[d][i] = u > 0.0 ? rng.uniform(-u, u) : 0.0;
                    cum += mm_.cap_errors[d][i];
                    mm_.cap_error_cumsum[d][i + 1] = cum;
                    worst = std::max(worst, std::abs(cum));
                }
                ok = worst <= inl_bound_units;
            }
            if (!ok)
                throw std::invalid_argument(
                    "chip: unit-cap mismatch bound cannot satisfy the 7-bit INL condition");
        }
        const double r = cfg_.row_gain_mismatch;
        bool ok = false;
        for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
            for (auto& e : mm_.row_gain_errors)
                e = r > 0.0 ? rng.uniform(-r, r) : 0.0;
            ok = true;
            for (int i = 0; i < 8 && ok; ++i)
                for (int j = 0; j < 8 && ok; ++j)
                    ok = (1.0 + mm_.row_gain_errors[i]) / (1.0 + mm_.row_gain_errors[j]) <= 1.01;
        }
        if (!ok)
            throw std::invalid_argument("chip: row gain mismatch bound violates 1% matching");
    }

    ChipConfig cfg_;
    MismatchRealization mm_;
    std::optional<QuantizedMatrix> codes_;
    int blanked_ = 0;
    int min_interval_ = 0;
    long samples_since_load_ = -1;
};

/// new_chip per the configuration contract; mismatch is rejection-sampled
/// until both analog invariants hold, deterministically per seed.
inline ChipInstance new_chip(const ChipConfig& cfg) { return ChipInstance(cfg); }

/// Nominal dynamic range: full-scale sine RMS over the configured noise
/// floor, in dB.
inline double dynamic_range_db(const ChipConfig& cfg) {
    const double fs_rms = cfg.full_scale_vpp / (2.0 * std::sqrt(2.0));
    if (cfg.noise_vrms <= 0.0)
        return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(fs_rms / cfg.noise_vrms);
}

} // namespace bssim
