#include "quantcal/partisan.hpp"

#include <stdexcept>

namespace quantcal {

SeedLists SeedLists::defaults() {
    SeedLists s;
    s.left_communities = {"politics", "Liberal", "progressive"};
    s.right_communities = {"The_Donald", "Conservative", "Republican"};
    return s;
}

std::map<std::string, UserActivity> accumulate(const Corpus& corpus,
                                               const SeedLists& seeds) {
    if (seeds.left_communities.empty() || seeds.right_communities.empty())
        throw std::invalid_argument("accumulate: seed lists must be nonempty");
    for (const auto& c : seeds.left_communities)
        if (seeds.right_communities.count(c))
            throw std::invalid_argument("accumulate: seed lists overlap on " + c);

    std::map<std::string, UserActivity> out;
    struct Sums {
        std::int64_t left_karma = 0, right_karma = 0;
    };
    std::map<std::string, Sums> sums;
    for (const auto& rec : corpus.records) {
        const bool left = seeds.left_communities.count(rec.community) > 0;
        const bool right = seeds.right_communities.count(rec.community) > 0;
        if (!left && !right) continue;
        auto& a = out[rec.author];
        a.user = rec.author;
        auto& s = sums[rec.author];
        if (left) {
            ++a.left_comments;
            s.left_karma += rec.karma;
        } else {
            ++a.right_comments;
            s.right_karma += rec.karma;
        }
    }
    for (auto& [user, a] : out) {
        const auto& s = sums[user];
        if (a.left_comments > 0)
            a.left_mean_karma = static_cast<double>(s.left_karma) / a.left_comments;
        if (a.right_comments > 0)
            a.right_mean_karma =
                static_cast<double>(s.right_karma) / a.right_comments;
    }
    return out;
}

Leaning classify_leaning(const UserActivity& a) {
    const auto side = [](std::int64_t own_n, std::int64_t other_n,
                         const std::optional<double>& own_mean,
                         const std::optional<double>& other_mean) {
        if (own_n <= other_n) return false;
        if (!own_mean) return false;
        // No activity on the other side: nothing contradicts the comparison.
        if (other_mean && !(*own_mean > *other_mean)) return false;
        return *own_mean > 1.0;
    };
    if (side(a.left_comments, a.right_comments, a.left_mean_karma,
             a.right_mean_karma))
        return Leaning::Left;
    if (side(a.right_comments, a.left_comments, a.right_mean_karma,
             a.left_mean_karma))
        return Leaning::Right;
    return Leaning::Unknown;
}

std::string to_string(Leaning l) {
    switch (l) {
        case Leaning::Left: return "left";
        case Leaning::Right: return "right";
        case Leaning::Unknown: return "unknown";
    }
    return "?";
}

}  // namespace quantcal
