#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "quantcal/calibrate.hpp"
#include "quantcal/corpus.hpp"
#include "quantcal/judgments.hpp"

namespace quantcal {

struct PipelineConfig {
    // Input paths
    std::string raw_path;
    std::string toxicity_path;
    std::string ratings_pol_path;
    std::string ratings_nonpol_path;
    std::string seed_lists_path;
    std::string synth_spec_path;
    std::set<std::string> political_communities;

    // Filters
    FilterConfig filter;

    // Thresholds and budgets
    double political_cutoff = 0.25;
    double calibrator_threshold = 0.0;  // 0 or 0.1
    AggregationStrategy aggregation = AggregationStrategy::majority;
    std::int64_t budget_pol = 2000;
    std::int64_t budget_nonpol = 8000;
    std::int64_t floor = 50;
    std::optional<double> lambda;  // classifier penalty; CV grid when absent
    int vocab_min_count = 5;
    std::size_t exclude_top_m = 10;
    int synth_runs = 200;

    std::uint64_t seed = 1;
    int threads = 1;

    void validate() const;  // throws naming the offending field
};

PipelineConfig load_config(const std::filesystem::path& path);

// FNV-1a 64-bit over file bytes, hex string. Used for manifests and the
// #config artifact headers.
std::string hash_file(const std::filesystem::path& path);
std::string hash_string(const std::string& data);

// Runs one pipeline stage in the workspace. Throws on missing upstream
// artifacts (message names the stage) or config violations.
void run_stage(const std::string& stage, const PipelineConfig& cfg,
               const std::filesystem::path& workspace);

const std::vector<std::string>& stage_names();

}  // namespace quantcal
