// SPDX-License-Identifier: Apache-2.0
//
// bssim: behavioral model of an 8x8 mixed-signal matrix multiplier and the
// blind source separation experiments run on it.
//
// Flat dotted-key configuration: parsing, scenario defaults and validation.

#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bssim/chipmodel.hpp"
#include "bssim/ica.hpp"
#include "bssim/signalgen.hpp"

namespace bssim {

/// Configuration rejection, mapped to exit code 1 by the CLI.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ScenarioKind { ToneSeparation, CommsSeparation, Characterization };

enum class CharTest { Im3, Bandwidth, Noise, Compression, Monotonicity };

inline std::string to_string(ScenarioKind k) {
    switch (k) {
    case ScenarioKind::ToneSeparation: return "tone";
    case ScenarioKind::CommsSeparation: return "comms";
    case ScenarioKind::Characterization: return "characterize";
    }
    return "?";
}

inline std::string to_string(CharTest t) {
    switch (t) {
    case CharTest::Im3: return "im3";
    case CharTest::Bandwidth: return "bandwidth";
    case CharTest::Noise: return "noise";
    case CharTest::Compression: return "compression";
    case CharTest::Monotonicity: return "monotonicity";
    }
    return "?";
}

/// Everything one experiment needs: scenario shape, sources, array
/// geometry, chip and ICA settings, characterization choices.
struct ScenarioConfig {
    ScenarioKind scenario = ScenarioKind::ToneSeparation;
    double fs = 100.0e6;
    double duration = 8.0e-3;
    std::uint64_t global_seed = 1;
    std::string output_dir = "out";

    double input_power_dbm = -10.0;
    bool angles_random = true;
    std::array<double, 4> angles_deg = {-40.0, -10.0, 15.0, 45.0};
    double element_spacing_wl = 0.5;
    bool ideal_chip = false;

    std::array<WaveformSpec, 4> sources{};
    ChipConfig chip{};
    IcaConfig ica{};

    // Measurement choices.
    std::size_t nfft = 65536;
    double signal_band_halfwidth = 50.0e3;

    // Characterization settings.
    std::set<CharTest> tests = {CharTest::Im3, CharTest::Bandwidth, CharTest::Noise,
                                CharTest::Compression, CharTest::Monotonicity};
    double char_filter_fs = 800.0e6;
    double char_im3_fs = 102.4e6;
    double char_im3_f1 = 1.0e6;
    double char_im3_f2 = 1.1e6;
    double char_im3_power_dbm = 4.0;
    bool char_im3_per_tone = true; // false: the 4 dBm is split across both tones
    double char_noise_duration = 12.0e-3;
    int char_monotonicity_seeds = 100;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(trim(item));
    return out;
}

} // namespace detail

/// Flat `key = value` file with '#' comments and dotted section names.
/// Every key must be consumed by the loader; unknown keys are rejected so
/// typos cannot silently fall back to defaults.
class ConfigMap {
  public:
    static ConfigMap from_string(const std::string& text) {
        ConfigMap m;
        std::stringstream ss(text);
        std::string line;
        int lineno = 0;
        while (std::getline(ss, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos)
                line = line.substr(0, hash);
            line = detail::trim(line);
            if (line.empty())
                continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": expected key = value");
            const std::string key = detail::trim(line.substr(0, eq));
            const std::string value = detail::trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            m.kv_[key] = value;
        }
        return m;
    }

    static ConfigMap from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in)
            throw ConfigError("cannot open config file: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return from_string(ss.str());
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::optional<std::string> take(const std::string& key) const {
        auto it = kv_.find(key);
        if (it == kv_.end())
            return std::nullopt;
        consumed_.insert(key);
        return it->second;
    }

    double take_double(const std::string& key, double fallback) const {
        const auto v = take(key);
        if (!v)
            return fallback;
        std::size_t pos = 0;
        double d = 0.0;
        try {
            d = std::stod(*v, &pos);
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': not a number: " + *v);
        }
        if (pos != v->size())
            throw ConfigError("config key '" + key + "': trailing junk in number: " + *v);
        return d;
    }

    std::uint64_t take_u64(const std::string& key, std::uint64_t fallback) const {
        const auto v = take(key);
        if (!v)
            return fallback;
        try {
            return std::stoull(*v);
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': not an integer: " + *v);
        }
    }

    int take_int(const std::string& key, int fallback) const {
        const auto v = take(key);
        if (!v)
            return fallback;
        try {
            return std::stoi(*v);
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': not an integer: " + *v);
        }
    }

    bool take_bool(const std::string& key, bool fallback) const {
        const auto v = take(key);
        if (!v)
            return fallback;
        if (*v == "true" || *v == "1" || *v == "yes")
            return true;
        if (*v == "false" || *v == "0" || *v == "no")
            return false;
        throw ConfigError("config key '" + key + "': not a boolean: " + *v);
    }

    std::string take_string(const std::string& key, const std::string& fallback) const {
        const auto v = take(key);
        return v ? *v : fallback;
    }

    /// Throws if any key was never consumed (typo protection).
    void reject_unknown() const {
        for (const auto& [k, v] : kv_)
            if (!consumed_.count(k))
                throw ConfigError("unknown config key: " + k);
    }

  private:
    std::map<std::string, std::string> kv_;
    mutable std::set<std::string> consumed_;
};

namespace detail {

inline WaveformKind parse_kind(const std::string& s) {
    if (s == "tone")
        return WaveformKind::Tone;
    if (s == "bpsk")
        return WaveformKind::Bpsk;
    if (s == "qam16")
        return WaveformKind::Qam16;
    if (s == "gmsk")
        return WaveformKind::Gmsk;
    if (s == "sccdma")
        return WaveformKind::ScCdma;
    throw ConfigError("unknown waveform kind: " + s);
}

inline CharTest parse_char_test(const std::string& s) {
    if (s == "im3")
        return CharTest::Im3;
    if (s == "bandwidth")
        return CharTest::Bandwidth;
    if (s == "noise")
        return CharTest::Noise;
    if (s == "compression")
        return CharTest::Compression;
    if (s == "monotonicity")
        return CharTest::Monotonicity;
    throw ConfigError("unknown characterization test: " + s);
}

} // namespace detail

/// Scenario-shaped defaults: the tone experiment (4 MHz tone plus three
/// independent filler tones, -10 dBm, 18 dB output gain) and the comms
/// experiment (GMSK/BPSK/QAM16/SC-CDMA at 1 MHz, -24 dBm, 24 dB gain).
inline ScenarioConfig default_config(ScenarioKind kind) {
    ScenarioConfig c;
    c.scenario = kind;
    switch (kind) {
    case ScenarioKind::ToneSeparation: {
        c.input_power_dbm = -10.0;
        c.chip.pga_gain_db = 18.0;
        c.duration = 8.0e-3;
        c.ica.max_epochs = 600;
        const std::array<double, 4> freqs = {4.0e6, 1.3e6, 2.3e6, 3.4e6};
        for (int k = 0; k < 4; ++k) {
            c.sources[k].kind = WaveformKind::Tone;
            c.sources[k].centre_freq = freqs[k];
        }
        break;
    }
    case ScenarioKind::CommsSeparation: {
        c.input_power_dbm = -24.0;
        c.chip.pga_gain_db = 24.0;
        c.duration = 10.0e-3;
        c.ica.max_epochs = 800;
        const std::array<WaveformKind, 4> kinds = {WaveformKind::Gmsk, WaveformKind::Bpsk,
                                                   WaveformKind::Qam16, WaveformKind::ScCdma};
        const std::array<double, 4> rates = {270.833e3, 250.0e3, 250.0e3, 31.25e3};
        for (int k = 0; k < 4; ++k) {
            c.sources[k].kind = kinds[k];
            c.sources[k].centre_freq = 1.0e6;
            c.sources[k].symbol_rate = rates[k];
        }
        c.signal_band_halfwidth = 500.0e3;
        break;
    }
    case ScenarioKind::Characterization:
        c.duration = 1.0e-3;
        break;
    }
    for (int k = 0; k < 4; ++k) {
        c.sources[k].duration = c.duration;
        c.sources[k].amplitude_vpp = dbm_to_vpp(c.input_power_dbm);
    }
    return c;
}

/// Builds the full configuration from a parsed file: scenario defaults
/// first, then every provided key on top. Rejects unknown keys.
inline ScenarioConfig load_config(const ConfigMap& m) {
    const std::string scen = m.take_string("scenario", "tone");
    ScenarioKind kind;
    if (scen == "tone")
        kind = ScenarioKind::ToneSeparation;
    else if (scen == "comms")
        kind = ScenarioKind::CommsSeparation;
    else if (scen == "characterize")
        kind = ScenarioKind::Characterization;
    else
        throw ConfigError("unknown scenario: " + scen);

    ScenarioConfig c = default_config(kind);
    c.fs = m.take_double("fs_hz", c.fs);
    c.duration = m.take_double("duration_s", c.duration);
    c.global_seed = m.take_u64("global_seed", c.global_seed);
    c.output_dir = m.take_string("output_dir", c.output_dir);
    c.input_power_dbm = m.take_double("input_power_dbm", c.input_power_dbm);
    c.element_spacing_wl = m.take_double("element_spacing_wl", c.element_spacing_wl);
    c.ideal_chip = m.take_bool("ideal_chip", c.ideal_chip);
    c.nfft = static_cast<std::size_t>(m.take_u64("nfft", c.nfft));
    c.signal_band_halfwidth =
        m.take_double("signal_band_halfwidth_hz", c.signal_band_halfwidth);

    const std::string amode = m.take_string("angles_mode", c.angles_random ? "random" : "fixed");
    if (amode == "random")
        c.angles_random = true;
    else if (amode == "fixed")
        c.angles_random = false;
    else
        throw ConfigError("angles_mode must be 'random' or 'fixed'");
    if (const auto v = m.take("angles_deg")) {
        const auto items = detail::split_list(*v);
        if (items.size() != 4)
            throw ConfigError("angles_deg needs exactly 4 comma-separated values");
        for (int k = 0; k < 4; ++k)
            c.angles_deg[k] = std::stod(items[k]);
        c.angles_random = false; // explicit angles win
    }

    for (int k = 0; k < 4; ++k) {
        const std::string p = "source" + std::to_string(k + 1) + ".";
        auto& s = c.sources[k];
        if (const auto v = m.take(p + "kind"))
            s.kind = detail::parse_kind(*v);
        s.centre_freq = m.take_double(p + "centre_freq_hz", s.centre_freq);
        s.symbol_rate = m.take_double(p + "symbol_rate_hz", s.symbol_rate);
        s.rrc_rolloff = m.take_double(p + "rrc_rolloff", s.rrc_rolloff);
        s.gmsk_bt = m.take_double(p + "gmsk_bt", s.gmsk_bt);
        s.sccdma_sf = m.take_int(p + "sccdma_sf", s.sccdma_sf);
        s.sccdma_code_index = m.take_int(p + "sccdma_code_index", s.sccdma_code_index);
    }

    const std::string fmode =
        m.take_string("chip.filter_mode",
                      c.chip.filter_mode == FilterMode::SixPole ? "sixpole" : "passthrough");
    if (fmode == "sixpole")
        c.chip.filter_mode = FilterMode::SixPole;
    else if (fmode == "passthrough")
        c.chip.filter_mode = FilterMode::PassThrough;
    else
        throw ConfigError("chip.filter_mode must be 'sixpole' or 'passthrough'");
    c.chip.fb_gain_db = m.take_double("chip.fb_gain_db", c.chip.fb_gain_db);
    c.chip.pga_gain_db = m.take_double("chip.pga_gain_db", c.chip.pga_gain_db);
    c.chip.noise_vrms = m.take_double("chip.noise_vrms", c.chip.noise_vrms);
    c.chip.a3 = m.take_double("chip.a3", c.chip.a3);
    c.chip.passthrough_bw = m.take_double("chip.passthrough_bw_hz", c.chip.passthrough_bw);
    c.chip.filter_cutoff = m.take_double("chip.filter_cutoff_hz", c.chip.filter_cutoff);
    c.chip.full_scale_vpp = m.take_double("chip.full_scale_vpp", c.chip.full_scale_vpp);
    c.chip.unit_cap_mismatch = m.take_double("chip.unit_cap_mismatch", c.chip.unit_cap_mismatch);
    c.chip.row_gain_mismatch = m.take_double("chip.row_gain_mismatch", c.chip.row_gain_mismatch);

    const std::string rule = m.take_string(
        "ica.rule",
        c.ica.rule == IcaRule::ExtendedInfomaxSubGaussian ? "extended_infomax" : "cubic");
    if (rule == "extended_infomax")
        c.ica.rule = IcaRule::ExtendedInfomaxSubGaussian;
    else if (rule == "cubic")
        c.ica.rule = IcaRule::CubicNonlinearity;
    else
        throw ConfigError("ica.rule must be 'extended_infomax' or 'cubic'");
    c.ica.lr_initial = m.take_double("ica.lr_initial", c.ica.lr_initial);
    c.ica.lr_decay = m.take_double("ica.lr_decay", c.ica.lr_decay);
    c.ica.batch_samples = m.take_int("ica.batch_samples", c.ica.batch_samples);
    c.ica.max_epochs = m.take_int("ica.max_epochs", c.ica.max_epochs);
    c.ica.complex_structured = m.take_bool("ica.complex_structured", c.ica.complex_structured);
    c.ica.whiten = m.take_bool("ica.whiten", c.ica.whiten);
    c.ica.convergence_tol = m.take_double("ica.convergence_tol", c.ica.convergence_tol);
    c.ica.init_perturbation = m.take_double("ica.init_perturbation", c.ica.init_perturbation);

    if (const auto v = m.take("characterize.tests")) {
        c.tests.clear();
        for (const auto& item : detail::split_list(*v))
            c.tests.insert(detail::parse_char_test(item));
    }
    c.char_filter_fs = m.take_double("characterize.filter_fs_hz", c.char_filter_fs);
    c.char_im3_fs = m.take_double("characterize.im3_fs_hz", c.char_im3_fs);
    c.char_im3_f1 = m.take_double("characterize.im3_f1_hz", c.char_im3_f1);
    c.char_im3_f2 = m.take_double("characterize.im3_f2_hz", c.char_im3_f2);
    c.char_im3_power_dbm = m.take_double("characterize.im3_input_power_dbm",
                                         c.char_im3_power_dbm);
    const std::string drive = m.take_string("characterize.im3_drive",
                                            c.char_im3_per_tone ? "per_tone" : "combined");
    if (drive == "per_tone")
        c.char_im3_per_tone = true;
    else if (drive == "combined")
        c.char_im3_per_tone = false;
    else
        throw ConfigError("characterize.im3_drive must be 'per_tone' or 'combined'");
    c.char_noise_duration = m.take_double("characterize.noise_duration_s",
                                          c.char_noise_duration);
    c.char_monotonicity_seeds =
        m.take_int("characterize.monotonicity_seeds", c.char_monotonicity_seeds);

    m.reject_unknown();

    // Re-derive the fields that track other settings unless explicitly set.
    for (int k = 0; k < 4; ++k) {
        c.sources[k].duration = c.duration;
        c.sources[k].amplitude_vpp = dbm_to_vpp(c.input_power_dbm);
        c.sources[k].seed = derive_seed(c.global_seed, 100 + static_cast<std::uint64_t>(k));
    }
    c.chip.seed = derive_seed(c.global_seed, 200);
    c.ica.seed = derive_seed(c.global_seed, 300);
    return c;
}

/// Validation shared by both entry points; throws ConfigError before any
/// file is written.
inline void validate_config(const ScenarioConfig& c) {
    if (!(c.fs > 0.0))
        throw ConfigError("fs_hz must be > 0");
    if (!(c.duration > 0.0))
        throw ConfigError("duration_s must be > 0");
    try {
        c.chip.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (c.scenario != ScenarioKind::Characterization) {
        if (!(c.fs >= 4.0 * c.chip.analog_corner()))
            throw ConfigError("fs_hz must be at least 4x the configured analog corner");
        const double samples = c.duration * c.fs;
        if (samples < 10.0 * static_cast<double>(c.ica.batch_samples))
            throw ConfigError("duration_s * fs_hz must cover at least 10 ICA batches");
        if (c.ica.batch_samples < min_interval_samples_at(c.fs))
            throw ConfigError(
                "ica.batch_samples must span the chip's minimum weight-update interval");
        if (!is_power_of_two(c.nfft))
            throw ConfigError("nfft must be a power of two");
    }
    if (c.scenario == ScenarioKind::Characterization && c.tests.empty())
        throw ConfigError("characterize.tests must not be empty");
}

/// The default configuration rendered in the config-file syntax, with every
/// key stated explicitly.
inline std::string render_config(const ScenarioConfig& c) {
    std::ostringstream o;
    o.precision(12);
    o << "scenario = " << to_string(c.scenario) << "\n";
    o << "fs_hz = " << c.fs << "\n";
    o << "duration_s = " << c.duration << "\n";
    o << "global_seed = " << c.global_seed << "\n";
    o << "output_dir = " << c.output_dir << "\n";
    o << "input_power_dbm = " << c.input_power_dbm << "\n";
    o << "angles_mode = " << (c.angles_random ? "random" : "fixed") << "\n";
    if (!c.angles_random) {
        o << "angles_deg = " << c.angles_deg[0] << ", " << c.angles_deg[1] << ", "
          << c.angles_deg[2] << ", " << c.angles_deg[3] << "\n";
    }
    o << "element_spacing_wl = " << c.element_spacing_wl << "\n";
    o << "ideal_chip = " << (c.ideal_chip ? "true" : "false") << "\n";
    o << "nfft = " << c.nfft << "\n";
    o << "signal_band_halfwidth_hz = " << c.signal_band_halfwidth << "\n";
    for (int k = 0; k < 4; ++k) {
        const std::string p = "source" + std::to_string(k + 1) + ".";
        const auto& s = c.sources[k];
        o << p << "kind = " << to_string(s.kind) << "\n";
        o << p << "centre_freq_hz = " << s.centre_freq << "\n";
        if (s.kind != WaveformKind::Tone) {
            o << p << "symbol_rate_hz = " << s.symbol_rate << "\n";
            o << p << "rrc_rolloff = " << s.rrc_rolloff << "\n";
        }
        if (s.kind == WaveformKind::Gmsk)
            o << p << "gmsk_bt = " << s.gmsk_bt << "\n";
        if (s.kind == WaveformKind::ScCdma) {
            o << p << "sccdma_sf = " << s.sccdma_sf << "\n";
            o << p << "sccdma_code_index = " << s.sccdma_code_index << "\n";
        }
    }
    o << "chip.filter_mode = "
      << (c.chip.filter_mode == FilterMode::SixPole ? "sixpole" : "passthrough") << "\n";
    o << "chip.fb_gain_db = " << c.chip.fb_gain_db << "\n";
    o << "chip.pga_gain_db = " << c.chip.pga_gain_db << "\n";
    o << "chip.noise_vrms = " << c.chip.noise_vrms << "\n";
    o << "chip.a3 = " << c.chip.a3 << "\n";
    o << "chip.passthrough_bw_hz = " << c.chip.passthrough_bw << "\n";
    o << "chip.filter_cutoff_hz = " << c.chip.filter_cutoff << "\n";
    o << "chip.full_scale_vpp = " << c.chip.full_scale_vpp << "\n";
    o << "chip.unit_cap_mismatch = " << c.chip.unit_cap_mismatch << "\n";
    o << "chip.row_gain_mismatch = " << c.chip.row_gain_mismatch << "\n";
    o << "ica.rule = "
      << (c.ica.rule == IcaRule::ExtendedInfomaxSubGaussian ? "extended_infomax" : "cubic")
      << "\n";
    o << "ica.lr_initial = " << c.ica.lr_initial << "\n";
    o << "ica.lr_decay = " << c.ica.lr_decay << "\n";
    o << "ica.batch_samples = " << c.ica.batch_samples << "\n";
    o << "ica.max_epochs = " << c.ica.max_epochs << "\n";
    o << "ica.complex_structured = " << (c.ica.complex_structured ? "true" : "false") << "\n";
    o << "ica.whiten = " << (c.ica.whiten ? "true" : "false") << "\n";
    o << "ica.convergence_tol = " << c.ica.convergence_tol << "\n";
    o << "ica.init_perturbation = " << c.ica.init_perturbation << "\n";
    o << "characterize.tests = ";
    bool first = true;
    for (const auto t : c.tests) {
        o << (first ? "" : ", ") << to_string(t);
        first = false;
    }
    o << "\n";
    o << "characterize.filter_fs_hz = " << c.char_filter_fs << "\n";
    o << "characterize.im3_fs_hz = " << c.char_im3_fs << "\n";
    o << "characterize.im3_f1_hz = " << c.char_im3_f1 << "\n";
    o << "characterize.im3_f2_hz = " << c.char_im3_f2 << "\n";
    o << "characterize.im3_input_power_dbm = " << c.char_im3_power_dbm << "\n";
    o << "characterize.im3_drive = " << (c.char_im3_per_tone ? "per_tone" : "combined") << "\n";
    o << "characterize.noise_duration_s = " << c.char_noise_duration << "\n";
    o << "characterize.monotonicity_seeds = " << c.char_monotonicity_seeds << "\n";
    return o.str();
}

} // namespace bssim
