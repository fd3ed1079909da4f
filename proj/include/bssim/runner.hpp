// SPDX-License-Identifier: Apache-2.0
//
// bssim: behavioral model of an 8x8 mixed-signal matrix multiplier and the
// blind source separation experiments run on it.
//
// Config-driven composition of the whole pipeline: sources -> mixing ->
// hardware-in-the-loop separation -> metrics -> plot-ready CSV/JSON.

#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "bssim/chipmodel.hpp"
#include "bssim/config.hpp"
#include "bssim/ica.hpp"
#include "bssim/metrics.hpp"
#include "bssim/mixing.hpp"
#include "bssim/signalgen.hpp"

namespace bssim {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Everything one run produces: the JSON report plus the rendered data
/// files, written out by emit_report.
struct RunReport {
    nlohmann::ordered_json json;
    std::map<std::string, std::string> files; // relative path -> content
    bool converged = true;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9e", v);
    return buf;
}

/// CSV with one frequency column and one dB column per spectrum.
inline std::string spectra_csv(const std::vector<Spectrum>& specs,
                               const std::vector<std::string>& names) {
    std::string out = "freq_hz";
    for (const auto& n : names)
        out += "," + n;
    out += "\n";
    for (std::size_t k = 0; k < specs[0].size(); ++k) {
        out += fmt_double(specs[0].freqs[k]);
        for (const auto& s : specs)
            out += "," + fmt_double(s.power_db[k]);
        out += "\n";
    }
    return out;
}

inline std::string history_csv(const std::vector<EpochRecord>& hist) {
    std::string out = "epoch,lr,update_norm,stationarity,amari\n";
    for (const auto& r : hist) {
        out += std::to_string(r.epoch) + "," + fmt_double(r.lr) + "," +
               fmt_double(r.update_norm) + "," + fmt_double(r.stationarity) + "," +
               fmt_double(r.amari) + "\n";
    }
    return out;
}

inline nlohmann::ordered_json config_echo(const ScenarioConfig& c) {
    nlohmann::ordered_json j;
    j["scenario"] = to_string(c.scenario);
    j["fs_hz"] = c.fs;
    j["duration_s"] = c.duration;
    j["global_seed"] = c.global_seed;
    j["output_dir"] = c.output_dir;
    j["input_power_dbm"] = c.input_power_dbm;
    j["angles_mode"] = c.angles_random ? "random" : "fixed";
    j["angles_deg"] = c.angles_deg;
    j["element_spacing_wl"] = c.element_spacing_wl;
    j["ideal_chip"] = c.ideal_chip;
    j["nfft"] = c.nfft;
    j["signal_band_halfwidth_hz"] = c.signal_band_halfwidth;
    for (int k = 0; k < 4; ++k) {
        nlohmann::ordered_json s;
        s["kind"] = to_string(c.sources[k].kind);
        s["centre_freq_hz"] = c.sources[k].centre_freq;
        s["symbol_rate_hz"] = c.sources[k].symbol_rate;
        s["amplitude_vpp"] = c.sources[k].amplitude_vpp;
        s["seed"] = c.sources[k].seed;
        s["rrc_rolloff"] = c.sources[k].rrc_rolloff;
        s["gmsk_bt"] = c.sources[k].gmsk_bt;
        s["sccdma_sf"] = c.sources[k].sccdma_sf;
        s["sccdma_code_index"] = c.sources[k].sccdma_code_index;
        j["sources"].push_back(s);
    }
    j["chip"]["filter_mode"] =
        c.chip.filter_mode == FilterMode::SixPole ? "sixpole" : "passthrough";
    j["chip"]["fb_gain_db"] = c.chip.fb_gain_db;
    j["chip"]["pga_gain_db"] = c.chip.pga_gain_db;
    j["chip"]["noise_vrms"] = c.chip.noise_vrms;
    j["chip"]["a3"] = c.chip.a3;
    j["chip"]["passthrough_bw_hz"] = c.chip.passthrough_bw;
    j["chip"]["filter_cutoff_hz"] = c.chip.filter_cutoff;
    j["chip"]["full_scale_vpp"] = c.chip.full_scale_vpp;
    j["chip"]["unit_cap_mismatch"] = c.chip.unit_cap_mismatch;
    j["chip"]["row_gain_mismatch"] = c.chip.row_gain_mismatch;
    j["chip"]["seed"] = c.chip.seed;
    j["ica"]["rule"] =
        c.ica.rule == IcaRule::ExtendedInfomaxSubGaussian ? "extended_infomax" : "cubic";
    j["ica"]["lr_initial"] = c.ica.lr_initial;
    j["ica"]["lr_decay"] = c.ica.lr_decay;
    j["ica"]["batch_samples"] = c.ica.batch_samples;
    j["ica"]["max_epochs"] = c.ica.max_epochs;
    j["ica"]["complex_structured"] = c.ica.complex_structured;
    j["ica"]["whiten"] = c.ica.whiten;
    j["ica"]["convergence_tol"] = c.ica.convergence_tol;
    j["ica"]["init_perturbation"] = c.ica.init_perturbation;
    j["ica"]["seed"] = c.ica.seed;
    std::vector<std::string> tests;
    for (const auto t : c.tests)
        tests.push_back(to_string(t));
    j["characterize"]["tests"] = tests;
    j["characterize"]["filter_fs_hz"] = c.char_filter_fs;
    j["characterize"]["im3_fs_hz"] = c.char_im3_fs;
    j["characterize"]["im3_f1_hz"] = c.char_im3_f1;
    j["characterize"]["im3_f2_hz"] = c.char_im3_f2;
    j["characterize"]["im3_input_power_dbm"] = c.char_im3_power_dbm;
    j["characterize"]["im3_drive"] = c.char_im3_per_tone ? "per_tone" : "combined";
    j["characterize"]["noise_duration_s"] = c.char_noise_duration;
    j["characterize"]["monotonicity_seeds"] = c.char_monotonicity_seeds;
    return j;
}

/// Seeded random arrival angles, redrawn until the steering matrix is
/// comfortably conditioned and the angles are well separated.
inline std::array<double, 4> draw_angles(std::uint64_t seed, double spacing,
                                         double* cond_out) {
    Rng rng(derive_seed(seed, 400));
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::array<double, 4> angles;
        for (auto& a : angles)
            a = rng.uniform(-60.0, 60.0);
        bool separated = true;
        for (int i = 0; i < 4 && separated; ++i)
            for (int j = i + 1; j < 4 && separated; ++j)
                separated = std::abs(angles[i] - angles[j]) >= 8.0;
        if (!separated)
            continue;
        try {
            const auto a = steering_matrix(angles, spacing);
            const double cond = a.condition_number();
            if (cond < 20.0) {
                if (cond_out)
                    *cond_out = cond;
                return angles;
            }
        } catch (const std::invalid_argument&) {
        }
    }
    throw ConfigError("could not draw a well-conditioned set of arrival angles");
}

inline std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

} // namespace detail

/// Writes report.json plus every rendered data file under `dir`
/// (idempotent overwrite) and returns the manifest.
inline std::vector<std::string> emit_report(RunReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> manifest;
    manifest.push_back("report.json");
    for (const auto& [name, content] : report.files)
        manifest.push_back(name);
    report.json["manifest"] = manifest;

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create output directory: " + dir + ": " + ec.message());

    const auto write_file = [&](const std::string& rel, const std::string& content) {
        const fs::path p = fs::path(dir) / rel;
        fs::create_directories(p.parent_path(), ec);
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot write output file: " + p.string());
        out << content;
        if (!out)
            throw IoError("short write on output file: " + p.string());
    };

    write_file("report.json", report.json.dump(2) + "\n");
    for (const auto& [name, content] : report.files)
        write_file(name, content);
    return manifest;
}

/// Runs a separation scenario end to end. Deterministic for a fixed config
/// and global seed; non-convergence is reported in-band, not thrown.
inline RunReport run_scenario(const ScenarioConfig& cfg) {
    validate_config(cfg);
    if (cfg.scenario == ScenarioKind::Characterization)
        throw ConfigError("run_scenario: use run_characterization for this config");

    RunReport report;
    report.json["timestamp"] = detail::timestamp_utc();
    report.json["config"] = detail::config_echo(cfg);
    report.json["seeds"]["global"] = cfg.global_seed;
    report.json["seeds"]["chip"] = cfg.chip.seed;
    report.json["seeds"]["ica"] = cfg.ica.seed;
    for (int k = 0; k < 4; ++k)
        report.json["seeds"]["sources"].push_back(cfg.sources[k].seed);

    // Sources and mixing.
    SourceBundle bundle;
    for (int k = 0; k < 4; ++k)
        bundle.sources[k] = generate(cfg.sources[k], cfg.fs);

    std::array<double, 4> angles = cfg.angles_deg;
    double cond = 0.0;
    if (cfg.angles_random)
        angles = detail::draw_angles(cfg.global_seed, cfg.element_spacing_wl, &cond);
    const MixingMatrix a = steering_matrix(angles, cfg.element_spacing_wl);
    cond = a.condition_number();
    report.json["mixing"]["angles_deg"] = angles;
    report.json["mixing"]["element_spacing_wl"] = cfg.element_spacing_wl;
    report.json["mixing"]["condition_number"] = cond;

    const RailStreams x = mix(a, bundle);

    // Separation: hardware-in-the-loop against the chip model, or the ideal
    // linear path for the algorithm-floor ablation.
    UnmixState state;
    RailStreams y;
    Real8 w_eval;
    if (cfg.ideal_chip) {
        const RailStreams xf = filter_rails(cfg.chip, x);
        auto res = run_bss_ideal(xf.samples, cfg.ica, nullptr);
        state = std::move(res.state);
        y.sample_rate = cfg.fs;
        y.samples = std::move(res.y);
        w_eval = state.W;
    } else {
        ChipInstance chip(cfg.chip);
        auto res = run_bss(x, chip, cfg.ica, cfg.fs, &a);
        state = std::move(res.state);
        y = std::move(res.y);
        w_eval = loaded_unmixing_matrix(chip, state);
    }
    report.converged = state.converged;
    report.json["ica_result"]["converged"] = state.converged;
    report.json["ica_result"]["epochs"] = state.iteration;
    report.json["ica_result"]["final_lr"] = state.lr;
    if (!state.history.empty()) {
        report.json["ica_result"]["final_update_norm"] = state.history.back().update_norm;
        report.json["ica_result"]["final_stationarity"] = state.history.back().stationarity;
    }

    // Complex output channels: fixed rail convention in complex-structured
    // mode, quadrature-coherence pairing otherwise.
    const PairingReport pairing = pair_outputs(w_eval);
    report.json["pairing"]["structured"] = pairing.structured;
    report.json["pairing"]["residual"] = pairing.residual;
    std::array<ComplexStream, 4> y_channels;
    for (int c = 0; c < 4; ++c) {
        const auto [ri, rq] = std::pair(pairing.pairs[c][0], pairing.pairs[c][1]);
        report.json["pairing"]["pairs"].push_back({ri + 1, rq + 1});
        ComplexStream ch;
        ch.sample_rate = cfg.fs;
        const auto n = static_cast<std::size_t>(y.length());
        ch.i_samples.resize(n);
        ch.q_samples.resize(n);
        for (std::size_t t = 0; t < n; ++t) {
            ch.i_samples[t] = y.samples(ri, static_cast<Eigen::Index>(t));
            ch.q_samples[t] = y.samples(rq, static_cast<Eigen::Index>(t));
        }
        y_channels[c] = ch;
    }

    // Ground-truth separation quality.
    const SirResult sir = sir_matrix(w_eval, a);
    SeparationReport sep;
    sep.permutation = sir.permutation;
    sep.per_channel_sir_db = sir.sir_db;
    sep.amari_index = amari_index(sir.g);

    if (cfg.scenario == ScenarioKind::ToneSeparation) {
        const double f0 = cfg.sources[0].centre_freq;
        const double lo = f0 - cfg.signal_band_halfwidth;
        const double hi = f0 + cfg.signal_band_halfwidth;
        // The tone lands in whichever output channel ICA put it.
        int target = 0;
        double best = -1.0e300;
        for (int c = 0; c < 4; ++c) {
            const double p = power_spectrum(y_channels[c], cfg.nfft).band_power(lo, hi);
            if (p > best) {
                best = p;
                target = c;
            }
        }
        const SeparationReport banded = separation_dbc(y_channels, target, lo, hi, cfg.nfft);
        sep.target_channel = banded.target_channel;
        sep.target_power_db = banded.target_power_db;
        sep.worst_other_db = banded.worst_other_db;
        sep.separation_dbc = banded.separation_dbc;
        sep.in_channel_sfdr_dbc = banded.in_channel_sfdr_dbc;
        report.json["separation"]["signal_band_hz"] = {lo, hi};
        report.json["separation"]["target_channel"] = sep.target_channel + 1;
        report.json["separation"]["target_power_db"] = sep.target_power_db;
        report.json["separation"]["worst_other_db"] = sep.worst_other_db;
        report.json["separation"]["separation_dbc"] = sep.separation_dbc;
        report.json["separation"]["in_channel_sfdr_dbc"] = sep.in_channel_sfdr_dbc;
    }
    if (cfg.scenario == ScenarioKind::CommsSeparation) {
        // The published result is qualitative; these are the quantitative
        // proxy thresholds this project evaluates against.
        report.json["separation"]["thresholds"]["per_channel_sir_db_min"] = 20.0;
        report.json["separation"]["thresholds"]["amari_index_max"] = 0.1;
    }
    report.json["separation"]["permutation"] = sep.permutation;
    report.json["separation"]["per_channel_sir_db"] = sep.per_channel_sir_db;
    report.json["separation"]["amari_index"] = sep.amari_index;

    // Plot-ready spectra: ideal sources, mixed rails, separated outputs.
    {
        std::vector<Spectrum> src_specs, out_specs, rail_specs;
        std::vector<std::string> ynames = {"y1_db", "y2_db", "y3_db", "y4_db"};
        for (int c = 0; c < 4; ++c)
            src_specs.push_back(power_spectrum(bundle.sources[c], cfg.nfft));
        for (int c = 0; c < 4; ++c)
            out_specs.push_back(power_spectrum(y_channels[c], cfg.nfft));
        std::vector<std::string> rnames;
        for (int r = 0; r < 8; ++r) {
            std::vector<double> rail(static_cast<std::size_t>(x.length()));
            for (std::size_t t = 0; t < rail.size(); ++t)
                rail[t] = x.samples(r, static_cast<Eigen::Index>(t));
            rail_specs.push_back(power_spectrum_real(rail, cfg.fs, cfg.nfft));
            rnames.push_back("ch" + std::to_string(r + 1));
        }
        report.files["spectra/sources_ideal.csv"] = detail::spectra_csv(src_specs, ynames);
        report.files["spectra/mixed_input.csv"] = detail::spectra_csv(rail_specs, rnames);
        report.files["spectra/separated_output.csv"] = detail::spectra_csv(out_specs, ynames);
    }
    report.files["history.csv"] = detail::history_csv(state.history);
    return report;
}

/// Executes the selected characterization tests and aggregates pass/fail
/// against the published targets.
inline RunReport run_characterization(const ScenarioConfig& cfg) {
    validate_config(cfg);
    if (cfg.tests.empty())
        throw ConfigError("run_characterization: empty test set");

    RunReport report;
    report.json["timestamp"] = detail::timestamp_utc();
    report.json["config"] = detail::config_echo(cfg);
    report.json["seeds"]["global"] = cfg.global_seed;
    report.json["seeds"]["chip"] = cfg.chip.seed;

    const ChipInstance chip(cfg.chip);
    bool all_passed = true;
    auto& res = report.json["characterization"];

    if (cfg.tests.count(CharTest::Bandwidth)) {
        const double bw_pass = bandwidth_3db(chip, FilterMode::PassThrough, cfg.char_filter_fs);
        const double bw_filt = bandwidth_3db(chip, FilterMode::SixPole, cfg.char_filter_fs);

        // Stopband check at 2x the cutoff against the six-pole oracle.
        ChipConfig fcfg = cfg.chip;
        fcfg.filter_mode = FilterMode::SixPole;
        const double f_stop = 2.0 * fcfg.filter_cutoff;
        const auto gain_at = [&](double f) {
            const auto xin = detail::tones_on_rail0({f}, 0.025, cfg.char_filter_fs, 1u << 16);
            const auto row = detail::drive_row0(fcfg, xin, cfg.char_filter_fs, 8192);
            return tone_amplitude(row, cfg.char_filter_fs, f);
        };
        const double atten_db =
            20.0 * std::log10(gain_at(fcfg.filter_cutoff / 50.0) / gain_at(f_stop));

        res["bandwidth"]["passthrough_3db_hz"] = bw_pass;
        res["bandwidth"]["sixpole_3db_hz"] = bw_filt;
        res["bandwidth"]["sixpole_atten_at_2x_cutoff_db"] = atten_db;
        const bool ok = std::abs(bw_pass - cfg.chip.passthrough_bw) <=
                            0.02 * cfg.chip.passthrough_bw &&
                        std::abs(bw_filt - cfg.chip.filter_cutoff) <=
                            0.02 * cfg.chip.filter_cutoff &&
                        std::abs(atten_db - 36.12) <= 1.0;
        res["bandwidth"]["passed"] = ok;
        all_passed = all_passed && ok;
    }

    if (cfg.tests.count(CharTest::Im3)) {
        const double total_vpp = dbm_to_vpp(cfg.char_im3_power_dbm);
        const double per_tone_vpp =
            cfg.char_im3_per_tone ? total_vpp : total_vpp / std::sqrt(2.0);
        const double im3 =
            im3_test(chip, cfg.char_im3_f1, cfg.char_im3_f2, per_tone_vpp, cfg.char_im3_fs);
        res["im3"]["per_tone_vpp"] = per_tone_vpp;
        res["im3"]["dbc"] = im3;
        const bool ok = cfg.char_im3_per_tone ? std::abs(im3 + 63.0) <= 1.0 : im3 <= -63.0;
        res["im3"]["passed"] = ok;
        all_passed = all_passed && ok;
    }

    if (cfg.tests.count(CharTest::Noise)) {
        const double measured = noise_floor(chip, cfg.char_noise_duration, cfg.fs);
        const double dr = dynamic_range_db(cfg.chip);
        res["noise"]["measured_vrms"] = measured;
        res["noise"]["configured_vrms"] = cfg.chip.noise_vrms;
        res["noise"]["dynamic_range_db"] = dr;
        const bool ok =
            std::abs(measured - cfg.chip.noise_vrms) <= 0.05 * cfg.chip.noise_vrms && dr > 62.0;
        res["noise"]["passed"] = ok;
        all_passed = all_passed && ok;
    }

    if (cfg.tests.count(CharTest::Compression)) {
        const double comp = compression_test(chip, 1.0e6, 1.0, cfg.char_im3_fs);
        res["compression"]["db_at_1vpp"] = comp;
        const bool ok = std::abs(comp) < 0.1;
        res["compression"]["passed"] = ok;
        all_passed = all_passed && ok;
    }

    if (cfg.tests.count(CharTest::Monotonicity)) {
        int passed_seeds = 0;
        for (int s = 0; s < cfg.char_monotonicity_seeds; ++s) {
            ChipConfig mcfg = cfg.chip;
            mcfg.seed = derive_seed(cfg.global_seed, 500 + static_cast<std::uint64_t>(s));
            const ChipInstance mchip(mcfg);
            bool monotone = true;
            for (int d = 0; d < 64 && monotone; ++d) {
                double prev = -2.0;
                for (int code = -4095; code <= 4095 && monotone; ++code) {
                    const int mag = std::abs(code);
                    const WeightCode c{code < 0, static_cast<std::uint8_t>(mag / 64),
                                       static_cast<std::uint8_t>(mag % 64)};
                    const double v = dac_value(c, mchip.mismatch(), d);
                    monotone = v > prev;
                    prev = v;
                }
            }
            if (monotone)
                ++passed_seeds;
        }
        res["monotonicity"]["seeds"] = cfg.char_monotonicity_seeds;
        res["monotonicity"]["monotone_seeds"] = passed_seeds;
        const bool ok = passed_seeds == cfg.char_monotonicity_seeds;
        res["monotonicity"]["passed"] = ok;
        all_passed = all_passed && ok;
    }

    res["all_passed"] = all_passed;
    return report;
}

} // namespace bssim
