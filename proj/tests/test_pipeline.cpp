#include <catch_amalgamated.hpp>

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "vgmap/config.hpp"
#include "vgmap/digest.hpp"
#include "vgmap/pipeline.hpp"

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using namespace vgmap;

namespace {

RunConfig noiseless_exact()
{
    RunConfig c;
    c.plan.shot_noise = false;
    c.extraction.mode = ExtractionMode::Exact;
    c.reconstruction.normalize.scale = c.scenario.delta_g_max;
    return c;
}

} // namespace

TEST_CASE("config: defaults serialize, parse back and digest stably", "[pipeline][config]")
{
    const RunConfig c;
    const auto text = serialize(c);
    const auto back = parse_run_config(text);
    CHECK(serialize(back) == text);
    CHECK(config_digest(back) == config_digest(c));
    CHECK(config_digest(c).size() == 64);

    auto other = c;
    other.seed = 2;
    CHECK(config_digest(other) != config_digest(c));

    const auto partial = parse_run_config(R"({"seed": 9, "plan": {"shots": 100}})");
    CHECK(partial.seed == 9);
    CHECK(partial.plan.shots == 100);
    CHECK(partial.scan.d_points == 200);
    const auto scaled = parse_run_config(R"({"reconstruction": {"scale": 0.0015}, "plan": {"t2_star": null}})");
    CHECK(scaled.reconstruction.normalize.scale == 0.0015);
    CHECK(std::isinf(scaled.plan.t2_star));
    CHECK(serialize(parse_run_config(serialize(scaled))) == serialize(scaled));
}

TEST_CASE("config: unknown keys and bad values are rejected", "[pipeline][config]")
{
    CHECK_THROWS_AS(parse_run_config(R"({"sed": 1})"), ValidationError);
    CHECK_THROWS_WITH(parse_run_config(R"({"plan": {"shotz": 1}})"), ContainsSubstring("shotz"));
    CHECK_THROWS_AS(parse_run_config(R"({"plan": {"shots": "many"}})"), ValidationError);
    CHECK_THROWS_AS(parse_run_config(R"({"plan": {"B": 0.2}})"), ValidationError);
    CHECK_THROWS_AS(parse_run_config(R"({"extraction": {"mode": "magic"}})"), ValidationError);
    CHECK_THROWS_AS(parse_run_config(R"({"scan": {"n_scanlines": 40}})"), ValidationError);
    CHECK_THROWS_AS(parse_run_config(R"({"reconstruction": {"axis_tolerance": 1.0}})"), ValidationError);
    CHECK_THROWS_AS(parse_run_config("{not json"), ValidationError);
    CHECK_THROWS_AS(parse_run_config("[]"), ValidationError);
}

TEST_CASE("stage wrapper maps errors to exit codes", "[pipeline]")
{
    try {
        run_stage("extract", []() -> int { throw ValidationError("bad"); });
        FAIL("no throw");
    } catch (const StageError& e) {
        CHECK(e.stage() == "extract");
        CHECK(e.code() == ExitCode::Validation);
        CHECK_THAT(std::string(e.what()), ContainsSubstring("[extract] bad"));
    }
    try {
        run_stage("reconstruct", []() -> int { throw NumericalError("flat"); });
    } catch (const StageError& e) {
        CHECK(e.code() == ExitCode::Numerical);
    }
    try {
        run_stage("load", []() -> int { throw IoError("gone"); });
    } catch (const StageError& e) {
        CHECK(e.code() == ExitCode::Io);
    }
    // An inner tag wins over the outer one.
    try {
        run_stage("outer", [] { return run_stage("inner", []() -> int { throw ValidationError("x"); }); });
    } catch (const StageError& e) {
        CHECK(e.stage() == "inner");
    }
    CHECK(run_stage("ok", [] { return 3; }) == 3);
}

TEST_CASE("noiseless exact round trip recovers the field", "[pipeline]")
{
    const auto r = roundtrip(noiseless_exact());
    CHECK(r.phases.scored > 800);
    CHECK(r.phases.rms < 1e-6);
    CHECK(r.phases.magnitude_max_error <= 1e-12);
    REQUIRE(r.pearson_r);
    CHECK_THAT(*r.pearson_r, WithinAbs(-1.0, 1e-6));
    CHECK(r.passed);
    CHECK(r.report["passed"] == true);
    CHECK(r.report["reconstruction"]["points"] == 1200);
    CHECK(r.map.records.size() == 1200);
}

TEST_CASE("round trip report is deterministic", "[pipeline]")
{
    auto c = noiseless_exact();
    c.scan.n_scanlines = 2;
    c.scan.d_points = 60;
    const auto a = roundtrip(c);
    const auto b = roundtrip(c);
    CHECK(a.report.dump() == b.report.dump());
    CHECK(a.report["config_digest"] == config_digest(c));
}

TEST_CASE("FFT extraction on a small noisy scan", "[pipeline]")
{
    RunConfig c;
    c.scan.n_scanlines = 1;
    c.scan.d_points = 100;
    const auto r = roundtrip(c);
    REQUIRE(r.pearson_r);
    CHECK(*r.pearson_r <= -0.85);
    CHECK(r.phases.magnitude_max_error <= c.thresholds.magnitude_error);
    auto stats = map_statistics(r.map, nullptr, nullptr);
    CHECK(stats.contains("pearson_r"));
}

TEST_CASE("ingest: canonical text is a fixed point; errors carry locations", "[pipeline][io]")
{
    const std::string raster = "y_nm,d_nm,tau_ns,ps\n0,0,0,1\n0,0,2,0.5\n0,2,0,1\n0,2,2,0.25\n";
    CHECK(ingest_text(raster, IngestSchema::Raster) == raster);
    const std::string messy = "d_nm,y_nm,evs_ueV\r\n0.0,0,1.50\r\n";
    const auto canon = ingest_text(messy, IngestSchema::Evs);
    CHECK(canon == "d_nm,y_nm,evs_ueV\n0,0,1.5\n");
    CHECK(ingest_text(canon, IngestSchema::Evs) == canon);
    const std::string peaks = "d_nm,y_nm,dg1,dg2,amp1,amp2,overridden\n0,0,0.0025,0.0015,0.2,0.1,0\n";
    CHECK(ingest_text(peaks, IngestSchema::Peaks) == peaks);

    CHECK_THROWS_WITH(ingest_text("y_nm,d_nm,tau_ns,ps\n0,0,0,1.2\n", IngestSchema::Raster),
                      ContainsSubstring("row 1 (line 2), column 'ps'"));
    CHECK_THROWS_WITH(ingest_text("d_nm,tau_ns,ps\n0,0,1\n", IngestSchema::Raster), ContainsSubstring("y_nm"));
    // Non-uniform tau spacing.
    CHECK_THROWS_AS(ingest_text("y_nm,d_nm,tau_ns,ps\n0,0,0,1\n0,0,2,1\n0,0,5,1\n", IngestSchema::Raster),
                    ValidationError);
    CHECK(parse_schema("peaks") == IngestSchema::Peaks);
    CHECK_THROWS_AS(parse_schema("gmap"), ValidationError);
}

TEST_CASE("outputs: manifest lists every file with its digest", "[pipeline][io]")
{
    const auto dir = std::filesystem::temp_directory_path() / "vgmap_test_pipeline";
    std::filesystem::remove_all(dir);
    const std::vector<OutputFile> files{{"simulate", "a.csv", "field", "x\n1\n"},
                                        {"extract", "b.csv", "peaks", "y\n2\n"}};
    const auto m = write_outputs(dir, files, "cfg", {{"raster.csv", "in"}});
    CHECK(m["outputs"].size() == 2);
    CHECK(m["outputs"][1]["sha256"] == sha256_hex("y\n2\n"));
    CHECK(m["inputs"]["raster.csv"] == "in");
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    CHECK(std::filesystem::exists(dir / "a.csv.meta.json"));
    CHECK(sha256_file(dir / "b.csv") == sha256_hex("y\n2\n"));
    std::filesystem::remove_all(dir);
}
