#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "scene_graph.hpp"
#include "walk_env.hpp"

namespace sgw {

// GQA-style metric suite. Metrics whose metadata is absent from the corpus
// are reported as unavailable, never as a silent 100.
struct MetricsReport {
  double accuracy = 0.0;
  std::optional<double> binary;
  std::optional<double> open;
  std::optional<double> consistency;
  std::optional<double> validity;
  std::optional<double> plausibility;
  int total = 0;

  std::string to_json() const;
  std::string to_table() const;
};

MetricsReport evaluate(const std::map<std::string, std::string>& preds,
                       const std::vector<QuestionRecord>& questions);

struct OracleResult {
  bool reachable = false;
  // witnessing walk with trailing NO_OPs stripped; empty when unreachable
  std::vector<std::pair<std::string, std::string>> path;
};

// Exhaustive enumeration of every length-T walk from the hub (with the
// final-step yes/no injections for binary questions). Errors when the walk
// count estimate exceeds the enumeration budget.
OracleResult oracle_search(const SceneGraph& augmented, const QuestionRecord& q,
                           const EpisodeConfig& cfg);

// Exact expected accuracy (in %) of a uniform random walker, by dynamic
// programming over the walk distribution.
double chance_level_question(const SceneGraph& augmented, const QuestionRecord& q,
                             const EpisodeConfig& cfg);
double chance_level(const std::map<std::string, SceneGraph>& augmented_graphs,
                    const std::vector<QuestionRecord>& questions, const EpisodeConfig& cfg);

// Monte-Carlo estimate (in %) of the same random walker.
double random_walk_accuracy(const std::map<std::string, SceneGraph>& augmented_graphs,
                            const std::vector<QuestionRecord>& questions,
                            const EpisodeConfig& cfg, long episodes, uint64_t seed);

}  // namespace sgw
