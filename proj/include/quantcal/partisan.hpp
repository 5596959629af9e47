#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "quantcal/corpus.hpp"

namespace quantcal {

struct UserActivity {
    std::string user;
    std::int64_t left_comments = 0;
    std::int64_t right_comments = 0;
    std::optional<double> left_mean_karma;   // present iff left_comments > 0
    std::optional<double> right_mean_karma;  // present iff right_comments > 0
};

struct SeedLists {
    std::set<std::string> left_communities;
    std::set<std::string> right_communities;

    static SeedLists defaults();
};

enum class Leaning { Left, Right, Unknown };

// Seed-community activity per user; users with no seed activity are absent.
std::map<std::string, UserActivity> accumulate(const Corpus& corpus,
                                               const SeedLists& seeds);

// Left iff more left comments, higher left mean karma (an absent opposing
// mean counts as satisfied), and left mean karma > 1. Right symmetric.
Leaning classify_leaning(const UserActivity& a);

std::string to_string(Leaning l);

}  // namespace quantcal
