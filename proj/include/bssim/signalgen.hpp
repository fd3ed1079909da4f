// SPDX-License-Identifier: Apache-2.0
//
// bssim: behavioral model of an 8x8 mixed-signal matrix multiplier and the
// blind source separation experiments run on it.
//
// Seeded baseband waveform generators: single complex tone plus GMSK, BPSK,
// QAM16 and SC-CDMA communication waveforms at a common centre frequency.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bssim/rng.hpp"
#include "bssim/stream.hpp"

namespace bssim {

enum class WaveformKind { Tone, Bpsk, Qam16, Gmsk, ScCdma };

inline std::string to_string(WaveformKind k) {
    switch (k) {
    case WaveformKind::Tone: return "tone";
    case WaveformKind::Bpsk: return "bpsk";
    case WaveformKind::Qam16: return "qam16";
    case WaveformKind::Gmsk: return "gmsk";
    case WaveformKind::ScCdma: return "sccdma";
    }
    return "?";
}

struct WaveformSpec {
    WaveformKind kind = WaveformKind::Tone;
    double centre_freq = 1.0e6;   // Hz
    double symbol_rate = 250.0e3; // Hz, ignored for Tone
    double amplitude_vpp = 0.2;   // peak-to-peak volts per rail
    std::uint64_t seed = 1;
    double duration = 1.0e-3; // s
    // Shaping parameters (conventional defaults; the measured experiments
    // fix only the centre frequency).
    double rrc_rolloff = 0.35; // BPSK / QAM16 / SC-CDMA
    double gmsk_bt = 0.3;
    int sccdma_sf = 16;        // Walsh spreading factor, power of two
    int sccdma_code_index = 5; // which Walsh row spreads the data
};

/// Sine-in-50-ohm conversion: Vpp = 2*sqrt(2)*sqrt(50 * P), P in watts.
inline double dbm_to_vpp(double power_dbm) {
    const double watts = std::pow(10.0, power_dbm / 10.0) * 1.0e-3;
    return 2.0 * std::sqrt(2.0) * std::sqrt(50.0 * watts);
}

// ---------------------------------------------------------------------------
// Symbol-level generators (exposed so tests can check symbol statistics
// without paying for full sample-rate streams).
// ---------------------------------------------------------------------------

inline std::vector<double> bpsk_symbols(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    std::vector<double> s(n);
    for (auto& v : s)
        v = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return s;
}

/// 16-QAM constellation {±1,±3} + j{±1,±3}, scaled by 1/sqrt(10) to unit
/// average power.
inline std::vector<std::complex<double>> qam16_symbols(std::uint64_t seed, std::size_t n) {
    static const double lv[4] = {-3.0, -1.0, 1.0, 3.0};
    const double scale = 1.0 / std::sqrt(10.0);
    Rng rng(seed);
    std::vector<std::complex<double>> s(n);
    for (auto& v : s) {
        const double re = lv[rng.uniform_index(4)];
        const double im = lv[rng.uniform_index(4)];
        v = std::complex<double>(re * scale, im * scale);
    }
    return s;
}

inline std::vector<std::complex<double>> qpsk_symbols(std::uint64_t seed, std::size_t n) {
    const double a = 1.0 / std::sqrt(2.0);
    Rng rng(seed);
    std::vector<std::complex<double>> s(n);
    for (auto& v : s)
        v = std::complex<double>(rng.uniform() < 0.5 ? -a : a, rng.uniform() < 0.5 ? -a : a);
    return s;
}

/// Row `index` of the sf x sf Hadamard matrix, entries +/-1. sf must be a
/// power of two.
inline std::vector<int> walsh_code(int sf, int index) {
    if (sf <= 0 || (sf & (sf - 1)) != 0)
        throw std::invalid_argument("walsh_code: spreading factor must be a power of two");
    if (index < 0 || index >= sf)
        throw std::invalid_argument("walsh_code: index out of range");
    std::vector<int> code(sf);
    for (int j = 0; j < sf; ++j) {
        const int par = __builtin_popcount(static_cast<unsigned>(index) & static_cast<unsigned>(j));
        code[j] = (par & 1) ? -1 : 1;
    }
    return code;
}

// ---------------------------------------------------------------------------
// Pulse shapes
// ---------------------------------------------------------------------------

/// Root-raised-cosine impulse response, unit symbol period, evaluated at
/// t (in symbols). Peak-normalized scale is irrelevant downstream because
/// every generator renormalizes to unit average power.
inline double rrc_pulse(double t, double beta) {
    const double eps = 1.0e-9;
    if (std::abs(t) < eps)
        return 1.0 + beta * (4.0 / M_PI - 1.0);
    if (beta > 0.0 && std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < eps) {
        const double a = M_PI / (4.0 * beta);
        return (beta / std::sqrt(2.0)) *
               ((1.0 + 2.0 / M_PI) * std::sin(a) + (1.0 - 2.0 / M_PI) * std::cos(a));
    }
    const double num = std::sin(M_PI * t * (1.0 - beta)) +
                       4.0 * beta * t * std::cos(M_PI * t * (1.0 + beta));
    const double den = M_PI * t * (1.0 - std::pow(4.0 * beta * t, 2.0));
    return num / den;
}

/// GMSK phase-smoothing pulse q(t) (t in symbols): integral of the
/// Gaussian-filtered rectangular frequency pulse, rising from 0 to 1/2.
inline double gmsk_phase_pulse(double t, double bt) {
    const double sigma = std::sqrt(std::log(2.0)) / (2.0 * M_PI * bt);
    const auto cdf = [sigma](double x) { return 0.5 * (1.0 + std::erf(x / (sigma * M_SQRT2))); };
    const auto pdf = [sigma](double x) {
        return std::exp(-x * x / (2.0 * sigma * sigma)) / (sigma * std::sqrt(2.0 * M_PI));
    };
    // Antiderivative of the Gaussian CDF.
    const auto anti = [&](double u) { return u * cdf(u) + sigma * sigma * pdf(u); };
    return 0.5 * (anti(t + 0.5) - anti(t - 0.5));
}

namespace detail {

/// Dense lookup table with linear interpolation, used to evaluate smooth
/// pulse shapes at fractional symbol offsets cheaply. Values outside the
/// tabulated range saturate to `below` / `above`.
class PulseTable {
  public:
    template <typename F>
    PulseTable(F f, double lo, double hi, int points, double below = 0.0, double above = 0.0)
        : lo_(lo), hi_(hi), below_(below), above_(above) {
        table_.resize(points);
        step_ = (hi - lo) / static_cast<double>(points - 1);
        for (int i = 0; i < points; ++i)
            table_[i] = f(lo + step_ * i);
    }

    double operator()(double x) const {
        if (x <= lo_)
            return below_;
        if (x >= hi_)
            return above_;
        const double u = (x - lo_) / step_;
        const auto i = static_cast<std::size_t>(u);
        const double frac = u - static_cast<double>(i);
        return table_[i] + frac * (table_[i + 1] - table_[i]);
    }

    double lo() const { return lo_; }
    double hi() const { return hi_; }

  private:
    std::vector<double> table_;
    double lo_, hi_, step_;
    double below_, above_;
};

constexpr int kRrcSpanSymbols = 8;

/// Linear pulse-shaped baseband: u(t) = sum_k sym[k] * g((t - k*Tsym)/Tsym).
/// Handles fractional samples-per-symbol; normalizes to unit average power.
inline std::vector<std::complex<double>>
shape_linear(const std::vector<std::complex<double>>& syms, double symbol_rate, double fs,
             double beta, std::size_t n_samples) {
    const PulseTable g([beta](double t) { return rrc_pulse(t, beta); },
                       -double(kRrcSpanSymbols), double(kRrcSpanSymbols),
                       kRrcSpanSymbols * 2 * 4096 + 1);
    const double sym_per_sample = symbol_rate / fs;
    std::vector<std::complex<double>> u(n_samples);
    for (std::size_t n = 0; n < n_samples; ++n) {
        const double tsym = static_cast<double>(n) * sym_per_sample;
        const auto k0 = static_cast<long>(std::floor(tsym));
        std::complex<double> acc(0.0, 0.0);
        for (long k = k0 - kRrcSpanSymbols; k <= k0 + kRrcSpanSymbols; ++k) {
            if (k < 0 || k >= static_cast<long>(syms.size()))
                continue;
            acc += syms[static_cast<std::size_t>(k)] * g(tsym - static_cast<double>(k));
        }
        u[n] = acc;
    }
    return u;
}

inline void normalize_power(std::vector<std::complex<double>>& u) {
    double p = 0.0;
    for (const auto& v : u)
        p += std::norm(v);
    p /= static_cast<double>(u.size());
    if (p <= 0.0)
        throw std::runtime_error("waveform has zero power before normalization");
    const double s = 1.0 / std::sqrt(p);
    for (auto& v : u)
        v *= s;
}

/// Rotate to the centre frequency and scale so each rail swings
/// amplitude_vpp peak-to-peak; package as a ComplexStream.
inline ComplexStream package(const std::vector<std::complex<double>>& u, double centre_freq,
                             double amplitude_vpp, double fs) {
    ComplexStream out;
    out.sample_rate = fs;
    out.i_samples.resize(u.size());
    out.q_samples.resize(u.size());
    const double a = amplitude_vpp / 2.0;
    const double w = 2.0 * M_PI * centre_freq / fs;
    for (std::size_t n = 0; n < u.size(); ++n) {
        const double ph = w * static_cast<double>(n);
        const std::complex<double> rot(std::cos(ph), std::sin(ph));
        const std::complex<double> s = a * u[n] * rot;
        out.i_samples[n] = s.real();
        out.q_samples[n] = s.imag();
    }
    return out;
}

inline std::size_t sample_count(double duration, double fs) {
    if (!(duration > 0.0))
        throw std::invalid_argument("duration must be > 0");
    const auto n = static_cast<std::size_t>(std::llround(duration * fs));
    return std::max<std::size_t>(n, 1);
}

inline void check_common(const WaveformSpec& spec, double fs, WaveformKind expected) {
    if (spec.kind != expected)
        throw std::invalid_argument("waveform spec kind does not match generator");
    if (!(fs > 0.0))
        throw std::invalid_argument("sample rate must be > 0");
    if (!(spec.centre_freq < fs / 2.0) || spec.centre_freq < 0.0)
        throw std::invalid_argument("centre frequency must lie in [0, fs/2)");
    if (!(spec.amplitude_vpp > 0.0))
        throw std::invalid_argument("amplitude must be > 0");
    if (expected != WaveformKind::Tone && !(spec.symbol_rate <= fs / 4.0))
        throw std::invalid_argument("symbol rate too high for sample rate (needs fs >= 4*Rs)");
    if (expected != WaveformKind::Tone && !(spec.symbol_rate > 0.0))
        throw std::invalid_argument("symbol rate must be > 0");
}

inline std::size_t symbol_count(std::size_t n_samples, double symbol_rate, double fs) {
    return static_cast<std::size_t>(
               std::ceil(static_cast<double>(n_samples) * symbol_rate / fs)) +
           2 * kRrcSpanSymbols;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Complex tone s[n] = (A/2) exp(j 2 pi f n / fs); each rail swings A
/// peak-to-peak.
inline ComplexStream gen_tone(double freq, double amplitude_vpp, double duration, double fs) {
    if (!(freq >= 0.0) || !(freq < fs / 2.0))
        throw std::invalid_argument("tone frequency must lie in [0, fs/2)");
    if (!(amplitude_vpp > 0.0))
        throw std::invalid_argument("amplitude must be > 0");
    const std::size_t n = detail::sample_count(duration, fs);
    ComplexStream out;
    out.sample_rate = fs;
    out.i_samples.resize(n);
    out.q_samples.resize(n);
    const double a = amplitude_vpp / 2.0;
    const double w = 2.0 * M_PI * freq / fs;
    for (std::size_t i = 0; i < n; ++i) {
        out.i_samples[i] = a * std::cos(w * static_cast<double>(i));
        out.q_samples[i] = a * std::sin(w * static_cast<double>(i));
    }
    return out;
}

inline ComplexStream gen_bpsk(const WaveformSpec& spec, double fs) {
    detail::check_common(spec, fs, WaveformKind::Bpsk);
    const std::size_t n = detail::sample_count(spec.duration, fs);
    const auto bits = bpsk_symbols(spec.seed, detail::symbol_count(n, spec.symbol_rate, fs));
    std::vector<std::complex<double>> syms(bits.size());
    for (std::size_t k = 0; k < bits.size(); ++k)
        syms[k] = std::complex<double>(bits[k], 0.0);
    auto u = detail::shape_linear(syms, spec.symbol_rate, fs, spec.rrc_rolloff, n);
    detail::normalize_power(u);
    return detail::package(u, spec.centre_freq, spec.amplitude_vpp, fs);
}

inline ComplexStream gen_qam16(const WaveformSpec& spec, double fs) {
    detail::check_common(spec, fs, WaveformKind::Qam16);
    const std::size_t n = detail::sample_count(spec.duration, fs);
    const auto syms = qam16_symbols(spec.seed, detail::symbol_count(n, spec.symbol_rate, fs));
    auto u = detail::shape_linear(syms, spec.symbol_rate, fs, spec.rrc_rolloff, n);
    detail::normalize_power(u);
    return detail::package(u, spec.centre_freq, spec.amplitude_vpp, fs);
}

/// Gaussian-filtered MSK: modulation index 1/2, phase pulse from
/// gmsk_phase_pulse. Constant envelope by construction.
inline ComplexStream gen_gmsk(const WaveformSpec& spec, double fs) {
    detail::check_common(spec, fs, WaveformKind::Gmsk);
    const std::size_t n = detail::sample_count(spec.duration, fs);
    const double sigma = std::sqrt(std::log(2.0)) / (2.0 * M_PI * spec.gmsk_bt);
    const double reach = 0.5 + 6.0 * sigma; // |t| beyond this: q is 0 or 1/2
    const detail::PulseTable q([&spec](double t) { return gmsk_phase_pulse(t, spec.gmsk_bt); },
                               -reach, reach, 65537, 0.0, 0.5);

    const double sym_per_sample = spec.symbol_rate / fs;
    const auto n_syms = static_cast<std::size_t>(
                            std::ceil(static_cast<double>(n) * sym_per_sample + reach)) +
                        2;
    const auto bits = bpsk_symbols(spec.seed, n_syms);

    std::vector<std::complex<double>> u(n);
    double settled = 0.0; // accumulated pi/2 * a_k for symbols fully in the past
    long k_settled = 0;   // symbols [0, k_settled) folded into `settled`
    for (std::size_t i = 0; i < n; ++i) {
        const double tsym = static_cast<double>(i) * sym_per_sample;
        while (static_cast<double>(k_settled) < tsym - reach &&
               k_settled < static_cast<long>(bits.size())) {
            settled += 0.5 * bits[static_cast<std::size_t>(k_settled)];
            ++k_settled;
        }
        double acc = settled;
        const auto k_hi = static_cast<long>(std::floor(tsym + reach));
        for (long k = k_settled; k <= k_hi && k < static_cast<long>(bits.size()); ++k)
            acc += bits[static_cast<std::size_t>(k)] * q(tsym - static_cast<double>(k));
        const double phase = M_PI * acc;
        u[i] = std::complex<double>(std::cos(phase), std::sin(phase));
    }
    // |u| = 1 exactly, so average power is already 1.
    return detail::package(u, spec.centre_freq, spec.amplitude_vpp, fs);
}

/// Single-code direct-sequence CDMA: QPSK symbols spread by one Walsh row,
/// RRC chip shaping at chip rate SF * symbol_rate.
inline ComplexStream gen_sccdma(const WaveformSpec& spec, double fs) {
    detail::check_common(spec, fs, WaveformKind::ScCdma);
    const double chip_rate = static_cast<double>(spec.sccdma_sf) * spec.symbol_rate;
    if (!(chip_rate <= fs / 4.0))
        throw std::invalid_argument("chip rate too high for sample rate (needs fs >= 4*SF*Rs)");
    const auto code = walsh_code(spec.sccdma_sf, spec.sccdma_code_index);
    const std::size_t n = detail::sample_count(spec.duration, fs);
    const std::size_t n_chips = detail::symbol_count(n, chip_rate, fs);
    const std::size_t n_syms = n_chips / spec.sccdma_sf + 1;
    const auto syms = qpsk_symbols(spec.seed, n_syms);
    std::vector<std::complex<double>> chips(n_chips);
    for (std::size_t c = 0; c < n_chips; ++c)
        chips[c] = syms[c / spec.sccdma_sf] *
                   static_cast<double>(code[c % static_cast<std::size_t>(spec.sccdma_sf)]);
    auto u = detail::shape_linear(chips, chip_rate, fs, spec.rrc_rolloff, n);
    detail::normalize_power(u);
    return detail::package(u, spec.centre_freq, spec.amplitude_vpp, fs);
}

/// Dispatch on spec.kind.
inline ComplexStream generate(const WaveformSpec& spec, double fs) {
    switch (spec.kind) {
    case WaveformKind::Tone:
        if (!(spec.centre_freq < fs / 2.0) || spec.centre_freq < 0.0)
            throw std::invalid_argument("centre frequency must lie in [0, fs/2)");
        return gen_tone(spec.centre_freq, spec.amplitude_vpp, spec.duration, fs);
    case WaveformKind::Bpsk: return gen_bpsk(spec, fs);
    case WaveformKind::Qam16: return gen_qam16(spec, fs);
    case WaveformKind::Gmsk: return gen_gmsk(spec, fs);
    case WaveformKind::ScCdma: return gen_sccdma(spec, fs);
    }
    throw std::invalid_argument("unknown waveform kind");
}

} // namespace bssim
