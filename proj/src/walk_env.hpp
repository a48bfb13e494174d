#pragma once

#include <string>
#include <vector>

#include "corpus.hpp"
#include "scene_graph.hpp"

namespace sgw {

struct EpisodeConfig {
  int max_steps = 4;  // T
  bool binary_final_injection = true;
};

struct WalkAction {
  RelationLabel relation;
  std::string target;
  bool injected = false;  // final-step TO_ANSWER transition

  std::string str() const { return relation.name + "->" + target; }
};

struct WalkState {
  std::string entity;
  int t = 0;
};

struct StepRecord {
  std::vector<WalkAction> actions;  // admissible set, in order
  std::vector<double> probs;
  std::vector<double> scores;  // pre-softmax action scores
  int chosen = -1;
};

struct EpisodeTrace {
  std::string qid;
  std::vector<std::string> entities;  // e_0..e_T
  std::vector<StepRecord> steps;      // T entries
  double reward = 0.0;
};

WalkState env_reset(const SceneGraph& g, const QuestionRecord& q);

// outgoing(e_t), plus the injected yes/no transitions on the final step of
// a binary question.
std::vector<WalkAction> admissible_actions(const SceneGraph& g, const QuestionRecord& q,
                                           const WalkState& s, const EpisodeConfig& cfg);

WalkState env_step(const SceneGraph& g, const QuestionRecord& q, const EpisodeConfig& cfg,
                   const WalkState& s, const WalkAction& a);

// 1 iff the terminal node answers the question: exact label match for open
// questions, the matching artificial node for binary ones.
double terminal_reward(const SceneGraph& g, const EpisodeTrace& trace,
                       const QuestionRecord& q, const EpisodeConfig& cfg);

// Predicted answer string a finished walk implies (the terminal label).
std::string trace_answer(const SceneGraph& g, const EpisodeTrace& trace);

std::string trace_to_json(const EpisodeTrace& trace);
std::string trace_to_dot(const EpisodeTrace& trace, const SceneGraph& g);

}  // namespace sgw
