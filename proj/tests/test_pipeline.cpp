#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pipeline_fixture.hpp"
#include "quantcal/pipeline.hpp"

using namespace quantcal;
using qc_test::PipelineFixture;
using qc_test::run_all_stages;
using qc_test::slurp;
namespace fs = std::filesystem;

TEST_CASE("pipeline runs end to end and is byte-deterministic") {
    PipelineFixture fx("e2e");
    const auto cfg = load_config(fx.dir / "config.json");
    const fs::path ws_a = fx.dir / "ws_a";
    const fs::path ws_b = fx.dir / "ws_b";
    run_all_stages(cfg, ws_a);
    run_all_stages(cfg, ws_b);

    int compared = 0;
    for (const auto& entry : fs::directory_iterator(ws_a)) {
        const auto name = entry.path().filename().string();
        CAPTURE(name);
        CHECK(slurp(entry.path()) == slurp(ws_b / name));
        ++compared;
    }
    CHECK(compared > 20);

    // Spot-check artifact contents.
    const std::string report = slurp(ws_a / "filter_report.txt");
    CHECK(report.find("retained=") != std::string::npos);
    const std::string cum = slurp(ws_a / "cumulative.txt");
    CHECK(cum.find("p=") != std::string::npos);
    const std::string fitfile = slurp(ws_a / "glmm_fit.txt");
    CHECK(fitfile.find("converged,1") != std::string::npos);
    const std::string synth = slurp(ws_a / "synth_report.txt");
    CHECK(synth.find("coverage=") != std::string::npos);

    // Every artifact carries the config fingerprint header.
    const std::string scores = slurp(ws_a / "scores.csv");
    CHECK(scores.rfind("#config=", 0) == 0);

    // Political communities pick the political calibrator and clear the
    // cutoff; the others do not.
    const std::string ests = slurp(ws_a / "estimates.csv");
    std::istringstream in(ests);
    std::string line;
    int seen = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("community,", 0) == 0)
            continue;
        std::stringstream ss(line);
        std::string community, n, diff, choice, p_subr;
        std::getline(ss, community, ',');
        std::getline(ss, n, ',');
        std::getline(ss, diff, ',');
        std::getline(ss, choice, ',');
        std::getline(ss, p_subr, ',');
        const bool pol = community == "politics" || community == "Conservative";
        CAPTURE(community);
        CHECK(choice == (pol ? "political" : "nonpolitical"));
        CHECK((std::stod(p_subr) >= 0.25) == pol);
        ++seen;
    }
    CHECK(seen == 4);
}

TEST_CASE("stages reject missing upstream artifacts") {
    PipelineFixture fx("missing");
    const auto cfg = load_config(fx.dir / "config.json");
    const fs::path ws = fx.dir / "ws";
    CHECK_THROWS_WITH_AS(run_stage("score", cfg, ws),
                         doctest::Contains("missing upstream artifact"),
                         std::runtime_error);
    run_stage("ingest", cfg, ws);
    CHECK_THROWS_WITH_AS(run_stage("estimate", cfg, ws),
                         doctest::Contains("run stage"), std::runtime_error);
}

TEST_CASE("stale inputs are detected") {
    PipelineFixture fx("stale");
    const auto cfg = load_config(fx.dir / "config.json");
    const fs::path ws = fx.dir / "ws";
    run_stage("ingest", cfg, ws);
    run_stage("train-clf", cfg, ws);
    // Tamper with the corpus after its manifest was written.
    std::ofstream(ws / "corpus.jsonl", std::ios::app) << "# tampered\n";
    CHECK_THROWS_WITH_AS(run_stage("score", cfg, ws),
                         doctest::Contains("stale input"), std::runtime_error);
}

TEST_CASE("workspace lock excludes concurrent runs") {
    PipelineFixture fx("lock");
    const auto cfg = load_config(fx.dir / "config.json");
    const fs::path ws = fx.dir / "ws";
    fs::create_directories(ws);
    std::ofstream(ws / ".lock") << "other\n";
    CHECK_THROWS_WITH_AS(run_stage("ingest", cfg, ws),
                         doctest::Contains("locked"), std::runtime_error);
    fs::remove(ws / ".lock");
    run_stage("ingest", cfg, ws);
    CHECK_FALSE(fs::exists(ws / ".lock"));  // released on completion
}

TEST_CASE("config validation names the offending field") {
    PipelineFixture fx("cfg");
    auto cfg = load_config(fx.dir / "config.json");
    cfg.budget_pol = 5;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("budget_pol"),
                         std::invalid_argument);
    cfg = load_config(fx.dir / "config.json");
    cfg.political_cutoff = 1.5;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("political_cutoff"),
                         std::invalid_argument);
}

TEST_CASE("hashing is stable") {
    CHECK(hash_string("") == "cbf29ce484222325");
    CHECK(hash_string("a") == "af63dc4c8601ec8c");
    CHECK(hash_string("hello") == hash_string("hello"));
    CHECK(hash_string("hello") != hash_string("hellp"));
}

#ifdef QUANTCAL_CLI_PATH
TEST_CASE("command line interface runs stages and reports errors") {
    PipelineFixture fx("cli");
    const fs::path ws = fx.dir / "ws";
    const std::string base = std::string(QUANTCAL_CLI_PATH) + " --config " +
                             (fx.dir / "config.json").string() + " --workspace " +
                             ws.string();
    CHECK(std::system((base + " ingest > /dev/null 2>&1").c_str()) == 0);
    CHECK(fs::exists(ws / "corpus.jsonl"));
    // Missing upstream artifact surfaces as a non-zero exit.
    CHECK(std::system((base + " estimate > /dev/null 2>&1").c_str()) != 0);
}
#endif
