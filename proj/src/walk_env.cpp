#include "walk_env.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace sgw {

using nlohmann::json;

WalkState env_reset(const SceneGraph& g, const QuestionRecord& q) {
  if (!g.augmented()) throw std::invalid_argument("env: graph must be augmented");
  if (!q.graph_id.empty() && !g.id().empty() && q.graph_id != g.id())
    throw std::invalid_argument("env: question '" + q.qid + "' belongs to graph '" +
                                q.graph_id + "', not '" + g.id() + "'");
  return WalkState{SceneGraph::kHubId, 0};
}

std::vector<WalkAction> admissible_actions(const SceneGraph& g, const QuestionRecord& q,
                                           const WalkState& s, const EpisodeConfig& cfg) {
  std::vector<WalkAction> out;
  for (const auto& [rel, target] : g.outgoing(s.entity))
    out.push_back(WalkAction{rel, target, false});
  if (q.type == QType::binary && cfg.binary_final_injection && s.t == cfg.max_steps - 1) {
    const RelationLabel to_answer = RelationLabel::make(kToAnswer);
    out.push_back(WalkAction{to_answer, SceneGraph::kYesId, true});
    out.push_back(WalkAction{to_answer, SceneGraph::kNoId, true});
  }
  return out;
}

WalkState env_step(const SceneGraph& g, const QuestionRecord& q, const EpisodeConfig& cfg,
                   const WalkState& s, const WalkAction& a) {
  if (s.t >= cfg.max_steps)
    throw std::invalid_argument("env: step beyond T=" + std::to_string(cfg.max_steps));
  const auto acts = admissible_actions(g, q, s, cfg);
  const bool ok = std::any_of(acts.begin(), acts.end(), [&](const WalkAction& b) {
    return b.relation.name == a.relation.name && b.target == a.target;
  });
  if (!ok)
    throw std::invalid_argument("env: inadmissible action " + a.str() + " at '" + s.entity +
                                "' (policy masking bug)");
  return WalkState{a.target, s.t + 1};
}

double terminal_reward(const SceneGraph& g, const EpisodeTrace& trace,
                       const QuestionRecord& q, const EpisodeConfig& cfg) {
  if (static_cast<int>(trace.entities.size()) != cfg.max_steps + 1)
    throw std::invalid_argument("env: trace has " + std::to_string(trace.entities.size()) +
                                " entities, expected " + std::to_string(cfg.max_steps + 1));
  const std::string& terminal = trace.entities.back();
  if (q.type == QType::binary) {
    const char* want = q.answer == "yes" ? SceneGraph::kYesId : SceneGraph::kNoId;
    return terminal == want ? 1.0 : 0.0;
  }
  return g.entity(terminal).label == q.answer ? 1.0 : 0.0;
}

std::string trace_answer(const SceneGraph& g, const EpisodeTrace& trace) {
  return g.entity(trace.entities.back()).label;
}

std::string trace_to_json(const EpisodeTrace& trace) {
  json j;
  j["qid"] = trace.qid;
  j["reward"] = trace.reward;
  json steps = json::array();
  for (size_t t = 0; t < trace.steps.size(); ++t) {
    const StepRecord& st = trace.steps[t];
    json js;
    js["from"] = trace.entities[t];
    js["relation"] = st.actions[static_cast<size_t>(st.chosen)].relation.name;
    js["to"] = trace.entities[t + 1];
    json dist = json::array();
    for (size_t a = 0; a < st.actions.size(); ++a)
      dist.push_back({st.actions[a].str(), st.probs[a]});
    js["dist"] = std::move(dist);
    steps.push_back(std::move(js));
  }
  j["steps"] = std::move(steps);
  return j.dump();
}

namespace {
std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}
}  // namespace

std::string trace_to_dot(const EpisodeTrace& trace, const SceneGraph& g) {
  std::ostringstream os;
  os << "digraph trace {\n  rankdir=LR;\n";
  std::vector<std::string> nodes;
  auto ensure_node = [&](const std::string& id) {
    if (std::find(nodes.begin(), nodes.end(), id) != nodes.end()) return;
    nodes.push_back(id);
    std::string label = g.has_entity(id) ? g.entity(id).label : id;
    os << "  " << dot_quote(id) << " [label=" << dot_quote(label + "\\n" + id) << "];\n";
  };
  for (const std::string& e : trace.entities) ensure_node(e);

  char buf[64];
  for (size_t t = 0; t < trace.steps.size(); ++t) {
    const StepRecord& st = trace.steps[t];
    const WalkAction& chosen = st.actions[static_cast<size_t>(st.chosen)];
    std::snprintf(buf, sizeof(buf), "%.3f", st.probs[static_cast<size_t>(st.chosen)]);
    os << "  " << dot_quote(trace.entities[t]) << " -> " << dot_quote(trace.entities[t + 1])
       << " [label=" << dot_quote(std::to_string(t + 1) + ": " + chosen.relation.name +
                                  " p=" + buf)
       << " penwidth=2];\n";
    // top-3 alternatives by probability
    std::vector<size_t> order(st.actions.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return st.probs[a] != st.probs[b] ? st.probs[a] > st.probs[b] : a < b;
    });
    int shown = 0;
    for (size_t i : order) {
      if (static_cast<int>(i) == st.chosen) continue;
      if (shown >= 3) break;
      ++shown;
      ensure_node(st.actions[i].target);
      std::snprintf(buf, sizeof(buf), "%.3f", st.probs[i]);
      os << "  " << dot_quote(trace.entities[t]) << " -> " << dot_quote(st.actions[i].target)
         << " [label=" << dot_quote(std::to_string(t + 1) + "? " +
                                    st.actions[i].relation.name + " p=" + buf)
         << " style=dashed color=gray];\n";
    }
  }
  os << "}\n";
  return os.str();
}

}  // namespace sgw
