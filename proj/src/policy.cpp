#include "policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgw {

HistoryState HistoryState::initial(int layers, int d) {
  HistoryState h;
  h.layers.reserve(static_cast<size_t>(layers));
  for (int i = 0; i < layers; ++i)
    h.layers.push_back(LstmState{Tensor::zeros({d}), Tensor::zeros({d})});
  return h;
}

std::pair<Tensor, HistoryState> encode_history(const HistoryState& h,
                                               const Tensor& prev_action_emb,
                                               const PolicyConfig& cfg,
                                               const ParamView& params) {
  HistoryState next;
  next.layers.reserve(h.layers.size());
  Tensor x = prev_action_emb;
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    const std::string lp = "policy.lstm.l" + std::to_string(l);
    LstmState st = lstm_cell(x, h.layers[static_cast<size_t>(l)], params[lp + ".w_ih"],
                             params[lp + ".w_hh"], params[lp + ".bias"]);
    x = st.h;
    next.layers.push_back(std::move(st));
  }
  return {x, std::move(next)};
}

std::pair<Tensor, Tensor> action_distribution(const Tensor& h_t, const Tensor& q_vec,
                                              const Tensor& action_latents,
                                              const ParamView& params) {
  if (action_latents.rows() == 0)
    throw std::invalid_argument("policy: empty admissible action set");
  Tensor ctx = matmul(relu(matmul(concat({h_t, q_vec}, 0), params["policy.w1"])),
                      params["policy.w2"]);
  Tensor scores = matmul(action_latents, ctx);
  return {softmax(scores), scores};
}

int sample_action(const std::vector<double>& probs, Rng& rng) {
  return rng.sample(probs);
}

namespace {

struct ActionIndices {
  std::vector<int> rel;
  std::vector<int> tgt;
};

ActionIndices index_actions(const std::vector<WalkAction>& acts, const GraphEncoding& enc) {
  ActionIndices ix;
  ix.rel.reserve(acts.size());
  ix.tgt.reserve(acts.size());
  for (const WalkAction& a : acts) {
    auto rit = enc.relation_index.find(a.relation.name);
    if (rit == enc.relation_index.end())
      throw std::runtime_error("policy: relation '" + a.relation.name +
                               "' missing from graph encoding");
    auto tit = enc.entity_index.find(a.target);
    if (tit == enc.entity_index.end())
      throw std::runtime_error("policy: entity '" + a.target +
                               "' missing from graph encoding");
    ix.rel.push_back(rit->second);
    ix.tgt.push_back(tit->second);
  }
  return ix;
}

// rows r_i + e_i for the admissible actions
Tensor action_latents_for(const std::vector<WalkAction>& acts, const GraphEncoding& enc) {
  const ActionIndices ix = index_actions(acts, enc);
  return add(gather_rows(enc.relations, ix.rel), gather_rows(enc.nodes, ix.tgt));
}

// previous-action embedding [r_{t-1}, e_t]
Tensor prev_action_embedding(const WalkAction& a, const GraphEncoding& enc, int d) {
  Tensor r = gather_rows(enc.relations, {enc.relation_index.at(a.relation.name)});
  Tensor e = gather_rows(enc.nodes, {enc.entity_index.at(a.target)});
  return reshape(concat({r, e}, 0), {2 * d});
}

int greedy_pick(const std::vector<double>& probs) {
  int best = 0;
  for (size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[static_cast<size_t>(best)]) best = static_cast<int>(i);
  return best;
}

}  // namespace

EpisodeTrace run_episode(const SceneGraph& g, const GraphEncoding& enc, const Tensor& q_vec,
                         const QuestionRecord& q, const EpisodeConfig& ecfg,
                         const PolicyConfig& pcfg, int d, const ParamView& params,
                         DecodeMode mode, Rng* rng, EpisodeTensors* tensors) {
  if (mode == DecodeMode::sample && rng == nullptr)
    throw std::invalid_argument("policy: sampling needs an rng");

  EpisodeTrace trace;
  trace.qid = q.qid;
  WalkState state = env_reset(g, q);
  trace.entities.push_back(state.entity);

  HistoryState hist = HistoryState::initial(pcfg.lstm_layers, d);
  Tensor a_prev = params["policy.start"];
  Tensor log_prob, entropy;
  bool have_scalars = false;

  for (int t = 0; t < ecfg.max_steps; ++t) {
    auto [h_t, next_hist] = encode_history(hist, a_prev, pcfg, params);
    hist = std::move(next_hist);

    const std::vector<WalkAction> acts = admissible_actions(g, q, state, ecfg);
    Tensor latents = action_latents_for(acts, enc);
    auto [probs, scores] = action_distribution(h_t, q_vec, latents, params);

    int choice = mode == DecodeMode::greedy ? greedy_pick(probs.v)
                                            : sample_action(probs.v, *rng);

    StepRecord rec;
    rec.actions = acts;
    rec.probs = probs.v;
    rec.scores = scores.v;
    rec.chosen = choice;
    trace.steps.push_back(std::move(rec));

    if (tensors) {
      Tensor logs = log(probs);
      Tensor lp = gather_rows(logs, {choice});
      Tensor ent = sub(Tensor::scalar(0.0), sum(mul(probs, logs)));
      if (!have_scalars) {
        log_prob = lp;
        entropy = ent;
        have_scalars = true;
      } else {
        log_prob = add(log_prob, lp);
        entropy = add(entropy, ent);
      }
    }

    const WalkAction& a = acts[static_cast<size_t>(choice)];
    a_prev = prev_action_embedding(a, enc, d);
    state = env_step(g, q, ecfg, state, a);
    trace.entities.push_back(state.entity);
  }

  trace.reward = terminal_reward(g, trace, q, ecfg);
  if (tensors) {
    tensors->log_prob = std::move(log_prob);
    tensors->entropy = std::move(entropy);
  }
  return trace;
}

EpisodeTrace beam_decode(const SceneGraph& g, const GraphEncoding& enc, const Tensor& q_vec,
                         const QuestionRecord& q, const EpisodeConfig& ecfg,
                         const PolicyConfig& pcfg, int d, const ParamView& params, int beam) {
  if (beam < 1) throw std::invalid_argument("policy: beam width must be >= 1");

  struct Cand {
    WalkState state;
    HistoryState hist;
    Tensor a_prev;
    double logp = 0.0;
    EpisodeTrace trace;
  };

  Cand start;
  start.state = env_reset(g, q);
  start.hist = HistoryState::initial(pcfg.lstm_layers, d);
  start.a_prev = params["policy.start"];
  start.trace.qid = q.qid;
  start.trace.entities.push_back(start.state.entity);

  std::vector<Cand> frontier{std::move(start)};
  for (int t = 0; t < ecfg.max_steps; ++t) {
    std::vector<Cand> expanded;
    for (const Cand& c : frontier) {
      auto [h_t, next_hist] = encode_history(c.hist, c.a_prev, pcfg, params);
      const std::vector<WalkAction> acts = admissible_actions(g, q, c.state, ecfg);
      Tensor latents = action_latents_for(acts, enc);
      auto [probs, scores] = action_distribution(h_t, q_vec, latents, params);
      for (size_t ai = 0; ai < acts.size(); ++ai) {
        Cand nxt;
        nxt.state = env_step(g, q, ecfg, c.state, acts[ai]);
        nxt.hist = next_hist;
        nxt.a_prev = prev_action_embedding(acts[ai], enc, d);
        nxt.logp = c.logp + std::log(probs.v[ai]);
        nxt.trace = c.trace;
        StepRecord rec;
        rec.actions = acts;
        rec.probs = probs.v;
        rec.scores = scores.v;
        rec.chosen = static_cast<int>(ai);
        nxt.trace.steps.push_back(std::move(rec));
        nxt.trace.entities.push_back(nxt.state.entity);
        expanded.push_back(std::move(nxt));
      }
    }
    // stable: ties keep expansion order (candidate index, then action index)
    std::stable_sort(expanded.begin(), expanded.end(),
                     [](const Cand& a, const Cand& b) { return a.logp > b.logp; });
    if (static_cast<int>(expanded.size()) > beam) expanded.resize(static_cast<size_t>(beam));
    frontier = std::move(expanded);
  }

  EpisodeTrace best = std::move(frontier.front().trace);
  best.reward = terminal_reward(g, best, q, ecfg);
  return best;
}

void register_policy_params(ParamSet& ps, const PolicyConfig& cfg, int d, uint64_t seed) {
  const int dff = cfg.d_ff > 0 ? cfg.d_ff : 2 * d;
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    const std::string lp = "policy.lstm.l" + std::to_string(l);
    const int in = l == 0 ? 2 * d : d;
    ps.add(lp + ".w_ih", uniform_init({in, 4 * d}, in, seed_stream(seed, lp + ".w_ih")));
    ps.add(lp + ".w_hh", uniform_init({d, 4 * d}, d, seed_stream(seed, lp + ".w_hh")));
    // forget-gate bias starts at 1
    Tensor bias = Tensor::zeros({4 * d});
    for (int j = d; j < 2 * d; ++j) bias.v[static_cast<size_t>(j)] = 1.0;
    ps.add(lp + ".bias", std::move(bias));
  }
  ps.add("policy.w1", uniform_init({2 * d, dff}, 2 * d, seed_stream(seed, "policy.w1")));
  ps.add("policy.w2", uniform_init({dff, d}, dff, seed_stream(seed, "policy.w2")));
  ps.add("policy.start", uniform_init({2 * d}, 2 * d, seed_stream(seed, "policy.start")));
  ps.add("policy.to_answer", uniform_init({d}, d, seed_stream(seed, "policy.to_answer")));
}

}  // namespace sgw
