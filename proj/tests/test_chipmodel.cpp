// SPDX-License-Identifier: Apache-2.0
//
// Chip model tests: weight quantization, hybrid-DAC transfer with mismatch,
// input filter and pass-through responses, load timing and the full analog
// path.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bssim/chipmodel.hpp"
#include "bssim/metrics.hpp"

using namespace bssim;
using Catch::Approx;

TEST_CASE("quantize_weight: zero, exact half, saturation", "[chipmodel]") {
    const auto z = quantize_weight(0.0);
    CHECK((!z.sign && z.msb == 0 && z.lsb == 0));

    const auto h = quantize_weight(0.5);
    CHECK((!h.sign && h.msb == 32 && h.lsb == 0));
    CHECK(h.magnitude() == 2048);

    const auto m = quantize_weight(-1.0);
    CHECK((m.sign && m.msb == 63 && m.lsb == 63));
    CHECK(m.magnitude() == 4095);

    const auto big = quantize_weight(7.5); // saturating, not throwing
    CHECK(big.magnitude() == 4095);

    // Round-half-away-from-zero at the LSB.
    CHECK(quantize_weight(1.5 / 4096.0).magnitude() == 2);
    CHECK(quantize_weight(-1.5 / 4096.0).magnitude() == 2);
}

TEST_CASE("dac_value: ideal codes, sign symmetry, monotone sweeps", "[chipmodel]") {
    ChipConfig cfg;
    cfg.unit_cap_mismatch = 0.0;
    cfg.row_gain_mismatch = 0.0;
    const ChipInstance ideal(cfg);

    WeightCode half{false, 32, 0};
    CHECK(dac_value(half, ideal.mismatch(), 0) == 0.5);
    CHECK(dac_value(WeightCode{false, 63, 63}, ideal.mismatch(), 5) ==
          Approx(4095.0 / 4096.0).margin(1e-15));

    ChipConfig mcfg;
    mcfg.seed = 77;
    const ChipInstance chip(mcfg);
    const auto& mm = chip.mismatch();

    // Odd symmetry over all codes for one DAC.
    for (int mag = 0; mag < 4096; mag += 17) {
        WeightCode c{false, static_cast<std::uint8_t>(mag / 64),
                     static_cast<std::uint8_t>(mag % 64)};
        WeightCode n = c;
        n.sign = true;
        REQUIRE(dac_value(n, mm, 9) == -dac_value(c, mm, 9));
    }

    // Exhaustive 8191-point signed sweep stays monotone on every DAC.
    for (int d = 0; d < 64; ++d) {
        double prev = -2.0;
        for (int signed_code = -4095; signed_code <= 4095; ++signed_code) {
            const int mag = std::abs(signed_code);
            WeightCode c{signed_code < 0, static_cast<std::uint8_t>(mag / 64),
                         static_cast<std::uint8_t>(mag % 64)};
            const double v = dac_value(c, mm, d);
            REQUIRE(v > prev);
            prev = v;
        }
    }
}

TEST_CASE("new_chip: determinism, INL bound, ideal when mismatch is zero", "[chipmodel]") {
    ChipConfig cfg;
    cfg.seed = 1234;
    const ChipInstance a(cfg);
    const ChipInstance b(cfg);
    CHECK(a.mismatch().cap_errors == b.mismatch().cap_errors);
    CHECK(a.mismatch().row_gain_errors == b.mismatch().row_gain_errors);

    for (int d = 0; d < 64; ++d)
        CHECK(a.mismatch().inl_of(d) <= 1.0 / 256.0);

    ChipConfig zero = cfg;
    zero.unit_cap_mismatch = 0.0;
    zero.row_gain_mismatch = 0.0;
    const ChipInstance ideal(zero);
    for (int mag = 0; mag < 4096; mag += 97) {
        WeightCode c{false, static_cast<std::uint8_t>(mag / 64),
                     static_cast<std::uint8_t>(mag % 64)};
        REQUIRE(dac_value(c, ideal.mismatch(), 3) == Approx(mag / 4096.0).margin(1e-15));
    }

    // Row gains matched better than 1%.
    for (int i = 0; i < 8; ++i) {
        CHECK(std::abs(a.mismatch().row_gain_errors[i]) < 0.01);
        for (int j = 0; j < 8; ++j) {
            const double ratio = (1.0 + a.mismatch().row_gain_errors[i]) /
                                 (1.0 + a.mismatch().row_gain_errors[j]);
            CHECK(ratio <= 1.01);
        }
    }

    ChipConfig bad = cfg;
    bad.unit_cap_mismatch = 0.3; // cannot meet the 7-bit INL condition
    CHECK_THROWS_AS(ChipInstance(bad), std::invalid_argument);
}

TEST_CASE("input filter: DC gain, cutoff, stopband oracle", "[chipmodel]") {
    ChipConfig cfg;
    const double fs = 800.0e6;
    const auto sections = butterworth6_sections(cfg.filter_cutoff, fs);

    CHECK(cascade_power_db(sections, 0.0, fs) == Approx(0.0).margin(0.01));
    CHECK(cascade_power_db(sections, 6.5e6, fs) == Approx(-3.0103).margin(0.1));

    // Analytic 6-pole Butterworth magnitude at 2x cutoff:
    // -10*log10(1 + 2^12) = -36.12 dB.
    const double oracle = -10.0 * std::log10(1.0 + std::pow(13.0e6 / 6.5e6, 12.0));
    CHECK(oracle == Approx(-36.12).margin(0.01));
    CHECK(cascade_power_db(sections, 13.0e6, fs) == Approx(oracle).margin(0.5));

    // The streaming path agrees with the analytic response.
    const double f_probe = 5.0e6;
    std::vector<double> tone(1 << 16);
    for (std::size_t n = 0; n < tone.size(); ++n)
        tone[n] = std::cos(2.0 * M_PI * f_probe * static_cast<double>(n) / fs);
    const auto filtered = input_filter(tone, cfg, fs);
    const double amp = tone_amplitude(filtered, fs, f_probe, 8192);
    CHECK(20.0 * std::log10(amp) ==
          Approx(cascade_power_db(sections, f_probe, fs)).margin(0.02));

    CHECK_THROWS_AS(input_filter(tone, cfg, 20.0e6), std::invalid_argument);
}

TEST_CASE("passthrough: DC gain, corner, one-pole rolloff slope", "[chipmodel]") {
    ChipConfig cfg;
    const double fs = 2.0e9;
    const Biquad pole = passthrough_pole(cfg.passthrough_bw, fs);

    CHECK(10.0 * std::log10(pole.response_power(0.0, fs)) == Approx(0.0).margin(0.01));
    CHECK(10.0 * std::log10(pole.response_power(15.4e6, fs)) == Approx(-3.0103).margin(0.1));

    const double p50 = 10.0 * std::log10(pole.response_power(50.0e6, fs));
    const double p150 = 10.0 * std::log10(pole.response_power(150.0e6, fs));
    const double slope_per_decade = (p50 - p150) / std::log10(150.0 / 50.0);
    CHECK(slope_per_decade == Approx(20.0).margin(0.5));

    CHECK_THROWS_AS(passthrough(std::vector<double>(16, 0.0), cfg, 40.0e6),
                    std::invalid_argument);
}

TEST_CASE("load_weights: timing arithmetic, zero matrix, quantization bound", "[chipmodel]") {
    const double fs = 100.0e6;
    CHECK(blanked_samples_at(fs) == 26);
    CHECK(min_interval_samples_at(fs) == 357);

    ChipConfig cfg;
    cfg.seed = 5;
    ChipInstance chip(cfg);
    const auto info = chip.load_weights(Real8::Zero(), fs);
    CHECK(info.blanked_samples == 26);
    CHECK(info.min_interval_samples == 357);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            CHECK(info.quantized.codes[i][j].magnitude() == 0);

    Rng rng(2024);
    Real8 w;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            w(i, j) = rng.uniform(-1.0, 1.0);
    ChipInstance chip2(cfg);
    const auto info2 = chip2.load_weights(w, fs);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            const double err = std::abs(info2.quantized.codes[i][j].ideal_value() - w(i, j));
            REQUIRE(err <= 0.5 / 4096.0 + 1e-15);
        }

    Real8 out_of_range = Real8::Zero();
    out_of_range(3, 4) = 1.001;
    CHECK_THROWS_AS(chip2.load_weights(out_of_range, fs), std::invalid_argument);
}

TEST_CASE("apply: identity path, noise-only path, blanking accounting", "[chipmodel]") {
    const double fs = 100.0e6;
    ChipConfig cfg;
    cfg.filter_mode = FilterMode::PassThrough;
    cfg.passthrough_bw = 24.0e6; // well above the probe tone
    cfg.noise_vrms = 0.0;
    cfg.a3 = 0.0;
    cfg.unit_cap_mismatch = 0.0;
    cfg.row_gain_mismatch = 0.0;
    ChipInstance chip(cfg);

    RailStreams x;
    x.sample_rate = fs;
    const Eigen::Index n = 1 << 14;
    x.samples.resize(8, n);
    for (int r = 0; r < 8; ++r)
        for (Eigen::Index t = 0; t < n; ++t)
            x.samples(r, t) =
                0.1 * std::cos(2.0 * M_PI * 1.0e6 * static_cast<double>(t) / fs + 0.3 * r);

    Rng noise(9);
    CHECK_THROWS_AS(chip.apply(x, noise), std::logic_error); // no weights yet

    chip.load_weights(Real8::Identity(), fs);
    auto out = chip.apply(x, noise);
    CHECK(out.invalid_prefix == 26);

    // Identity weights quantize to 4095/4096; at 1 MHz the 24 MHz pole costs
    // only ~0.008 dB, so Y tracks X closely after settling.
    const double unit = 4095.0 / 4096.0;
    double worst = 0.0;
    for (int r = 0; r < 8; ++r)
        for (Eigen::Index t = 4096; t < n; ++t)
            worst = std::max(worst,
                             std::abs(out.y.samples(r, t) - unit * x.samples(r, t)));
    CHECK(worst < 5e-3); // bounded by the pole's phase lag at 1 MHz

    // Second apply continues the stream: no further blanking.
    auto out2 = chip.apply(x, noise);
    CHECK(out2.invalid_prefix == 0);

    // Noise-only path: zero weights, 0 dB gains.
    ChipConfig ncfg;
    ncfg.noise_vrms = 0.15e-3;
    ChipInstance nchip(ncfg);
    nchip.load_weights(Real8::Zero(), fs);
    RailStreams zeros;
    zeros.sample_rate = fs;
    zeros.samples = Eigen::MatrixXd::Zero(8, 1 << 17);
    Rng nrng(123);
    auto nout = nchip.apply(zeros, nrng);
    const auto valid = nout.y.samples.cols() - nout.invalid_prefix;
    double acc = 0.0;
    for (int r = 0; r < 8; ++r)
        acc += nout.y.samples.row(r).tail(valid).squaredNorm() / static_cast<double>(valid);
    const double measured = std::sqrt(acc / 8.0);
    CHECK(measured == Approx(0.15e-3).epsilon(0.05));
}

TEST_CASE("apply honors the minimum weight-update interval", "[chipmodel]") {
    const double fs = 100.0e6;
    ChipConfig cfg;
    ChipInstance chip(cfg);
    chip.load_weights(Real8::Identity(), fs);

    RailStreams x;
    x.sample_rate = fs;
    x.samples = Eigen::MatrixXd::Zero(8, 100); // < 357 samples
    Rng rng(1);
    chip.apply(x, rng);
    CHECK_THROWS_AS(chip.load_weights(Real8::Identity(), fs), std::logic_error);

    RailStreams more;
    more.sample_rate = fs;
    more.samples = Eigen::MatrixXd::Zero(8, 400);
    chip.apply(more, rng);
    CHECK_NOTHROW(chip.load_weights(Real8::Identity(), fs));
}

TEST_CASE("gain steps and config validation", "[chipmodel]") {
    ChipConfig cfg;
    cfg.fb_gain_db = 6.0;
    cfg.pga_gain_db = 18.0;
    CHECK(cfg.row_gain_linear() == Approx(std::pow(10.0, 24.0 / 20.0)));
    CHECK_NOTHROW(cfg.validate());

    cfg.pga_gain_db = 7.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.pga_gain_db = 18.0;
    cfg.fb_gain_db = 3.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.fb_gain_db = 0.0;
    cfg.noise_vrms = 0.5e-3;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("dynamic range exceeds 62 dB at nominal settings", "[chipmodel]") {
    ChipConfig cfg; // 1 Vpp full scale, 0.15 mV noise
    CHECK(dynamic_range_db(cfg) > 62.0);
    CHECK(dynamic_range_db(cfg) == Approx(67.4).margin(0.1));
}
