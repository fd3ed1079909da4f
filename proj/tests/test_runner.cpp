// SPDX-License-Identifier: Apache-2.0
//
// Runner tests: config parsing and validation, report emission, manifest
// contracts, determinism and CLI exit codes.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bssim/config.hpp"
#include "bssim/runner.hpp"

using namespace bssim;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Small but structurally complete tone scenario for fast tests.
ScenarioConfig small_tone_config() {
    ScenarioConfig cfg = default_config(ScenarioKind::ToneSeparation);
    cfg.duration = 1.5e-3;
    cfg.nfft = 16384;
    cfg.ica.max_epochs = 12;
    cfg.ica.batch_samples = 8192;
    cfg.angles_random = false;
    for (auto& s : cfg.sources)
        s.duration = cfg.duration;
    return cfg;
}

int run_cli(const std::string& args) {
#ifdef SIM_BINARY_PATH
    const std::string cmd = std::string(SIM_BINARY_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
#else
    (void)args;
    return -1;
#endif
}

} // namespace

TEST_CASE("config: defaults, overrides, rejection of unknown keys", "[runner]") {
    const auto m = ConfigMap::from_string(R"(
# tone scenario with a couple of overrides
scenario = tone
fs_hz = 100e6
chip.pga_gain_db = 12
ica.lr_initial = 0.02
source1.centre_freq_hz = 3.5e6
)");
    const auto cfg = load_config(m);
    CHECK(cfg.scenario == ScenarioKind::ToneSeparation);
    CHECK(cfg.chip.pga_gain_db == 12.0);
    CHECK(cfg.ica.lr_initial == 0.02);
    CHECK(cfg.sources[0].centre_freq == 3.5e6);
    CHECK(cfg.sources[1].kind == WaveformKind::Tone); // scenario default kept

    CHECK_THROWS_AS(load_config(ConfigMap::from_string("scenario = nope")), ConfigError);
    CHECK_THROWS_AS(load_config(ConfigMap::from_string("chip.pga_gain = 12")), ConfigError);
    CHECK_THROWS_AS(load_config(ConfigMap::from_string("fs_hz = twelve")), ConfigError);
    CHECK_THROWS_AS(ConfigMap::from_string("just a line without equals"), ConfigError);
}

TEST_CASE("config: comms defaults carry the four waveforms", "[runner]") {
    const auto cfg = load_config(ConfigMap::from_string("scenario = comms"));
    CHECK(cfg.sources[0].kind == WaveformKind::Gmsk);
    CHECK(cfg.sources[1].kind == WaveformKind::Bpsk);
    CHECK(cfg.sources[2].kind == WaveformKind::Qam16);
    CHECK(cfg.sources[3].kind == WaveformKind::ScCdma);
    CHECK(cfg.input_power_dbm == -24.0);
    CHECK(cfg.chip.pga_gain_db == 24.0);
    for (const auto& s : cfg.sources) {
        CHECK(s.centre_freq == 1.0e6);
        CHECK(s.amplitude_vpp == Catch::Approx(dbm_to_vpp(-24.0)));
    }
}

TEST_CASE("print-defaults text round-trips through the parser", "[runner]") {
    for (const auto kind : {ScenarioKind::ToneSeparation, ScenarioKind::CommsSeparation,
                            ScenarioKind::Characterization}) {
        const ScenarioConfig def = default_config(kind);
        const auto reparsed = load_config(ConfigMap::from_string(render_config(def)));
        CHECK(reparsed.scenario == def.scenario);
        CHECK(reparsed.fs == def.fs);
        CHECK(reparsed.duration == def.duration);
        CHECK(reparsed.chip.pga_gain_db == def.chip.pga_gain_db);
        CHECK(reparsed.ica.max_epochs == def.ica.max_epochs);
        CHECK(reparsed.tests == def.tests);
        for (int k = 0; k < 4; ++k) {
            CHECK(reparsed.sources[k].kind == def.sources[k].kind);
            CHECK(reparsed.sources[k].centre_freq == def.sources[k].centre_freq);
        }
    }
}

TEST_CASE("invalid configs are rejected before any file is written", "[runner]") {
    const fs::path dir = fs::temp_directory_path() / "bssim_test_reject";
    fs::remove_all(dir);

    ScenarioConfig cfg = small_tone_config();
    cfg.duration = 0.0;
    cfg.output_dir = dir.string();
    CHECK_THROWS_AS(run_scenario(cfg), ConfigError);
    CHECK_FALSE(fs::exists(dir));

    ScenarioConfig bad_fs = small_tone_config();
    bad_fs.fs = 20.0e6; // below 4x the 6.5 MHz corner
    CHECK_THROWS_AS(run_scenario(bad_fs), ConfigError);

    ScenarioConfig bad_batch = small_tone_config();
    bad_batch.ica.batch_samples = 100; // under the weight-update interval
    CHECK_THROWS_AS(run_scenario(bad_batch), ConfigError);

    ScenarioConfig bad_tests = default_config(ScenarioKind::Characterization);
    bad_tests.tests.clear();
    CHECK_THROWS_AS(run_characterization(bad_tests), ConfigError);
}

TEST_CASE("emit_report: empty report writes report.json only", "[runner]") {
    const fs::path dir = fs::temp_directory_path() / "bssim_test_empty";
    fs::remove_all(dir);
    RunReport rep;
    rep.json["timestamp"] = "t";
    const auto manifest = emit_report(rep, dir.string());
    REQUIRE(manifest.size() == 1);
    CHECK(manifest[0] == "report.json");
    CHECK(fs::exists(dir / "report.json"));
    CHECK(fs::file_size(dir / "report.json") > 0);

    CHECK_THROWS_AS(emit_report(rep, "/proc/definitely/not/writable"), IoError);
}

TEST_CASE("tone scenario: manifest contract and determinism", "[runner]") {
    ScenarioConfig cfg = small_tone_config();
    const fs::path dir1 = fs::temp_directory_path() / "bssim_test_run1";
    const fs::path dir2 = fs::temp_directory_path() / "bssim_test_run2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);

    RunReport rep1 = run_scenario(cfg);
    const auto manifest1 = emit_report(rep1, dir1.string());
    REQUIRE(manifest1.size() >= 4); // report + 3 spectra CSVs
    for (const auto& f : manifest1) {
        CHECK(fs::exists(dir1 / f));
        CHECK(fs::file_size(dir1 / f) > 0);
    }

    // Identical config + seed: byte-identical files, report.json identical
    // except the timestamp.
    RunReport rep2 = run_scenario(cfg);
    emit_report(rep2, dir2.string());
    for (const auto& f : manifest1) {
        if (f == "report.json")
            continue;
        REQUIRE(slurp(dir1 / f) == slurp(dir2 / f));
    }
    auto j1 = rep1.json;
    auto j2 = rep2.json;
    j1.erase("timestamp");
    j2.erase("timestamp");
    CHECK(j1 == j2);

    // The report echoes every config default explicitly.
    CHECK(rep1.json["config"]["ica"].contains("lr_decay"));
    CHECK(rep1.json["config"]["chip"].contains("a3"));
    CHECK(rep1.json["config"]["sources"].size() == 4);
    CHECK(rep1.json["mixing"].contains("condition_number"));

    // Rerun with a different seed changes results.
    ScenarioConfig other = cfg;
    other.global_seed = 7;
    for (int k = 0; k < 4; ++k)
        other.sources[k].seed = derive_seed(7, 100 + static_cast<std::uint64_t>(k));
    other.chip.seed = derive_seed(7, 200);
    other.ica.seed = derive_seed(7, 300);
    RunReport rep3 = run_scenario(other);
    CHECK(rep3.json["separation"]["separation_dbc"] !=
          rep1.json["separation"]["separation_dbc"]);
}

TEST_CASE("characterization run: subset of tests, pass flags", "[runner]") {
    ScenarioConfig cfg = default_config(ScenarioKind::Characterization);
    cfg.tests = {CharTest::Noise, CharTest::Monotonicity};
    cfg.char_noise_duration = 4.0e-3;
    cfg.char_monotonicity_seeds = 3;

    const RunReport rep = run_characterization(cfg);
    const auto& chr = rep.json["characterization"];
    REQUIRE(chr.contains("noise"));
    REQUIRE(chr.contains("monotonicity"));
    CHECK_FALSE(chr.contains("im3"));
    CHECK(chr["noise"]["passed"].get<bool>());
    CHECK(chr["monotonicity"]["monotone_seeds"].get<int>() == 3);
    CHECK(chr["noise"]["dynamic_range_db"].get<double>() > 62.0);
    CHECK(chr["all_passed"].get<bool>());
}

TEST_CASE("cli exit codes", "[runner]") {
    if (run_cli("--help") == -1)
        SKIP("sim binary path not wired in");
    CHECK(run_cli("print-defaults") == 0);
    CHECK(run_cli("print-defaults --scenario comms") == 0);
    CHECK(run_cli("print-defaults --scenario bogus") == 1);
    CHECK(run_cli("run --config /nonexistent.cfg") == 1);

    const fs::path bad = fs::temp_directory_path() / "bssim_bad.cfg";
    std::ofstream(bad) << "scenario = tone\nduration_s = 0\n";
    CHECK(run_cli("run --config " + bad.string()) == 1);
}
