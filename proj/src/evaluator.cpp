#include "evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rng.hpp"

namespace sgw {

using nlohmann::json;

MetricsReport evaluate(const std::map<std::string, std::string>& preds,
                       const std::vector<QuestionRecord>& questions) {
  for (const auto& [qid, a] : preds) {
    const bool known = std::any_of(questions.begin(), questions.end(),
                                   [&](const QuestionRecord& q) { return q.qid == qid; });
    if (!known) throw std::invalid_argument("evaluate: prediction for unknown qid '" + qid + "'");
  }

  MetricsReport rep;
  rep.total = static_cast<int>(questions.size());
  int correct = 0, bin_n = 0, bin_c = 0, open_n = 0, open_c = 0;
  int valid_n = 0, valid_c = 0, plaus_n = 0, plaus_c = 0;
  std::map<std::string, bool> is_correct;
  for (const QuestionRecord& q : questions) {
    auto it = preds.find(q.qid);
    if (it == preds.end())
      throw std::invalid_argument("evaluate: no prediction for qid '" + q.qid + "'");
    const std::string& pred = it->second;
    const bool ok = pred == q.answer;
    is_correct[q.qid] = ok;
    correct += ok;
    if (q.type == QType::binary) {
      ++bin_n;
      bin_c += ok;
    } else {
      ++open_n;
      open_c += ok;
    }
    if (q.valid) {
      ++valid_n;
      valid_c += std::find(q.valid->begin(), q.valid->end(), pred) != q.valid->end();
    }
    if (q.plausible) {
      ++plaus_n;
      plaus_c += std::find(q.plausible->begin(), q.plausible->end(), pred) !=
                 q.plausible->end();
    }
  }
  rep.accuracy = questions.empty() ? 0.0 : 100.0 * correct / static_cast<double>(rep.total);
  if (bin_n) rep.binary = 100.0 * bin_c / static_cast<double>(bin_n);
  if (open_n) rep.open = 100.0 * open_c / static_cast<double>(open_n);
  if (valid_n) rep.validity = 100.0 * valid_c / static_cast<double>(valid_n);
  if (plaus_n) rep.plausibility = 100.0 * plaus_c / static_cast<double>(plaus_n);

  // consistency: groups are keyed by the anchor question's qid; over groups
  // whose anchor is answered correctly, mean per-group fraction of entailed
  // questions answered correctly
  std::map<std::string, std::vector<const QuestionRecord*>> groups;
  for (const QuestionRecord& q : questions)
    if (q.group) groups[*q.group].push_back(&q);
  double group_sum = 0.0;
  int group_n = 0;
  for (const auto& [gid, members] : groups) {
    const bool anchor_known =
        std::any_of(members.begin(), members.end(),
                    [&](const QuestionRecord* q) { return q->qid == gid; });
    if (!anchor_known || !is_correct.count(gid) || !is_correct.at(gid)) continue;
    int ent_n = 0, ent_c = 0;
    for (const QuestionRecord* q : members) {
      if (q->qid == gid) continue;
      ++ent_n;
      ent_c += is_correct.at(q->qid);
    }
    if (ent_n == 0) continue;
    group_sum += static_cast<double>(ent_c) / ent_n;
    ++group_n;
  }
  if (group_n) rep.consistency = 100.0 * group_sum / group_n;
  return rep;
}

std::string MetricsReport::to_json() const {
  json j;
  j["accuracy"] = accuracy;
  j["total"] = total;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
    else j[key] = nullptr;
  };
  put("binary", binary);
  put("open", open);
  put("consistency", consistency);
  put("validity", validity);
  put("plausibility", plausibility);
  return j.dump();
}

std::string MetricsReport::to_table() const {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("   n/a");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.2f", *v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "Binary  Open    Consistency  Validity  Plausibility  Accuracy\n";
  os << cell(binary) << "  " << cell(open) << "  " << cell(consistency) << "       "
     << cell(validity) << "    " << cell(plausibility) << "        ";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%6.2f", accuracy);
  os << buf << "\n";
  return os.str();
}

namespace {

bool is_answer_node(const SceneGraph& g, const QuestionRecord& q, const std::string& node) {
  if (q.type == QType::binary)
    return node == (q.answer == "yes" ? SceneGraph::kYesId : SceneGraph::kNoId);
  return g.entity(node).label == q.answer;
}

}  // namespace

OracleResult oracle_search(const SceneGraph& augmented, const QuestionRecord& q,
                           const EpisodeConfig& cfg) {
  if (!augmented.augmented())
    throw std::invalid_argument("oracle_search: graph must be augmented");
  constexpr double kBudget = 1e6;

  // walk-count estimate by dynamic programming
  std::map<std::string, double> count{{SceneGraph::kHubId, 1.0}};
  for (int t = 0; t < cfg.max_steps; ++t) {
    std::map<std::string, double> next;
    for (const auto& [node, c] : count) {
      const auto acts = admissible_actions(augmented, q, WalkState{node, t}, cfg);
      for (const WalkAction& a : acts) next[a.target] += c;
    }
    count = std::move(next);
  }
  double total = 0.0;
  for (const auto& [node, c] : count) total += c;
  if (total > kBudget) {
    std::ostringstream os;
    os << "oracle_search: ~" << total << " length-" << cfg.max_steps
       << " walks exceed the enumeration budget of " << kBudget;
    throw std::invalid_argument(os.str());
  }

  // The witness path drops NO_OP padding (the same convention stored
  // corpora use); "shortest" minimizes the number of real hops.
  OracleResult best;
  std::vector<std::pair<std::string, std::string>> walk;
  int best_len = cfg.max_steps + 1;

  std::function<void(const std::string&, int)> dfs = [&](const std::string& node, int t) {
    if (t == cfg.max_steps) {
      if (!is_answer_node(augmented, q, node)) return;
      std::vector<std::pair<std::string, std::string>> hops;
      for (const auto& hop : walk)
        if (hop.first != kNoOp) hops.push_back(hop);
      if (!best.reachable || static_cast<int>(hops.size()) < best_len) {
        best.reachable = true;
        best_len = static_cast<int>(hops.size());
        best.path = std::move(hops);
      }
      return;
    }
    const auto acts = admissible_actions(augmented, q, WalkState{node, t}, cfg);
    for (const WalkAction& a : acts) {
      walk.emplace_back(a.relation.name, a.target);
      dfs(a.target, t + 1);
      walk.pop_back();
    }
  };
  dfs(SceneGraph::kHubId, 0);
  return best;
}

double chance_level_question(const SceneGraph& augmented, const QuestionRecord& q,
                             const EpisodeConfig& cfg) {
  if (!augmented.augmented())
    throw std::invalid_argument("chance_level: graph must be augmented");
  std::map<std::string, double> dist{{SceneGraph::kHubId, 1.0}};
  for (int t = 0; t < cfg.max_steps; ++t) {
    std::map<std::string, double> next;
    for (const auto& [node, p] : dist) {
      const auto acts = admissible_actions(augmented, q, WalkState{node, t}, cfg);
      const double share = p / static_cast<double>(acts.size());
      for (const WalkAction& a : acts) next[a.target] += share;
    }
    dist = std::move(next);
  }
  double hit = 0.0;
  for (const auto& [node, p] : dist)
    if (is_answer_node(augmented, q, node)) hit += p;
  return 100.0 * hit;
}

double chance_level(const std::map<std::string, SceneGraph>& augmented_graphs,
                    const std::vector<QuestionRecord>& questions, const EpisodeConfig& cfg) {
  if (questions.empty()) return 0.0;
  double acc = 0.0;
  for (const QuestionRecord& q : questions)
    acc += chance_level_question(augmented_graphs.at(q.graph_id), q, cfg);
  return acc / static_cast<double>(questions.size());
}

double random_walk_accuracy(const std::map<std::string, SceneGraph>& augmented_graphs,
                            const std::vector<QuestionRecord>& questions,
                            const EpisodeConfig& cfg, long episodes, uint64_t seed) {
  if (questions.empty()) return 0.0;
  Rng rng(seed_stream(seed, "random-walk"));
  long hits = 0;
  for (long ep = 0; ep < episodes; ++ep) {
    const QuestionRecord& q =
        questions[static_cast<size_t>(rng.uniform_int(static_cast<int>(questions.size())))];
    const SceneGraph& g = augmented_graphs.at(q.graph_id);
    std::string node = SceneGraph::kHubId;
    for (int t = 0; t < cfg.max_steps; ++t) {
      const auto acts = admissible_actions(g, q, WalkState{node, t}, cfg);
      node = acts[static_cast<size_t>(rng.uniform_int(static_cast<int>(acts.size())))].target;
    }
    hits += is_answer_node(g, q, node) ? 1 : 0;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(episodes);
}

}  // namespace sgw
