#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "antispoof/error.hpp"

namespace antispoof::eval {

struct FoldPlan {
  std::size_t k = 5;
  std::map<std::string, std::size_t> assignment;  // subject -> fold

  std::vector<std::string> fold_subjects(std::size_t fold) const {
    std::vector<std::string> out;
    for (const auto& [s, f] : assignment)
      if (f == fold) out.push_back(s);
    return out;
  }
  bool in_fold(const std::string& subject, std::size_t fold) const {
    auto it = assignment.find(subject);
    return it != assignment.end() && it->second == fold;
  }
};

// Subject-level partition: subjects sorted, shuffled by seed, dealt round-robin.
inline FoldPlan make_folds(const std::vector<std::string>& subjects, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("make_folds: k must be at least 2");
  const std::set<std::string> unique(subjects.begin(), subjects.end());
  if (unique.size() < k)
    throw ConfigError("make_folds: " + std::to_string(unique.size()) + " subjects cannot fill " +
                      std::to_string(k) + " folds");
  std::vector<std::string> order(unique.begin(), unique.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FoldPlan plan{k, {}};
  for (std::size_t i = 0; i < order.size(); ++i) plan.assignment[order[i]] = i % k;
  return plan;
}

}  // namespace antispoof::eval
