#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "corpus.hpp"
#include "model.hpp"
#include "policy.hpp"
#include "rng.hpp"
#include "synthetic.hpp"

using namespace sgw;

namespace {

Model small_model(int d = 8, uint64_t seed = 5) {
  ModelConfig cfg;
  cfg.d = d;
  cfg.gat.heads = 2;
  cfg.qenc.heads = 2;
  cfg.qenc.ff = 2 * d;
  cfg.seed = seed;
  std::vector<std::string> words = {"answer", "ball",    "blue", "box", "color", "edge",
                                    "hub",    "inverse", "is",   "no",  "of",    "op",
                                    "red",    "the",     "to",   "what", "yes"};
  return Model::init(cfg, words, nullptr);
}

SceneGraph color_graph() {
  SceneGraph g("g1");
  g.add_entity(SceneEntity{"ball-1", "ball", EntityKind::object, std::nullopt});
  g.add_entity(SceneEntity{"box-2", "box", EntityKind::object, std::nullopt});
  g.add_entity(SceneEntity{"red-3", "red", EntityKind::attribute, std::nullopt});
  g.add_triple("ball-1", "is", "red-3");
  return g;
}

QuestionRecord color_question() {
  QuestionRecord q;
  q.qid = "q1";
  q.graph_id = "g1";
  q.tokens = {"what", "is", "the", "color", "of", "the", "ball"};
  q.answer = "red";
  q.type = QType::open;
  return q;
}

}  // namespace

TEST_SUITE_BEGIN("policy");

TEST_CASE("history encoding is deterministic with the right shape") {
  Model m = small_model();
  ParamView view(m.params, nullptr);
  HistoryState h0 = HistoryState::initial(m.cfg.policy.lstm_layers, m.cfg.d);
  auto [h1a, s1a] = encode_history(h0, view["policy.start"], m.cfg.policy, view);
  auto [h1b, s1b] = encode_history(h0, view["policy.start"], m.cfg.policy, view);
  CHECK(h1a.shape == Shape{m.cfg.d});
  for (double x : h1a.v) CHECK(std::isfinite(x));
  CHECK(h1a.v == h1b.v);
  CHECK(s1a.layers.size() == static_cast<size_t>(m.cfg.policy.lstm_layers));
}

TEST_CASE("history gradients match finite differences") {
  Model m = small_model(4, 9);
  Rng rng(3);
  Tensor w = Tensor::zeros({m.cfg.d});
  for (double& x : w.v) x = rng.uniform(-1.0, 1.0);
  for (const char* pname : {"policy.lstm.l0.w_ih", "policy.lstm.l1.w_hh", "policy.start"}) {
    auto f = [&](const Tensor& x) {
      ParamView view(m.params, Tape::active());
      view.override_with(pname, x);
      HistoryState h0 = HistoryState::initial(m.cfg.policy.lstm_layers, m.cfg.d);
      auto [h1, s1] = encode_history(h0, view["policy.start"], m.cfg.policy, view);
      auto [h2, s2] = encode_history(s1, concat({h1, h1}, 0), m.cfg.policy, view);
      (void)s2;
      return sum(mul(h2, w));
    };
    CHECK(grad_check(f, m.params.value(pname), 1e-5) < 1e-4);
  }
}

TEST_CASE("singleton action set gets probability one") {
  Model m = small_model();
  ParamView view(m.params, nullptr);
  const SceneGraph aug = SceneGraph("empty").augment();
  QuestionRecord q;
  q.qid = "q";
  q.graph_id = "empty";
  q.tokens = {"what"};
  q.answer = "x";
  q.type = QType::open;
  GraphEncoding enc = m.encode(aug, view);
  Tensor qv = m.encode_question_vec(q.tokens, view);
  // hub in the empty augmented graph: NO_OP only? hub also reaches yes/no? no —
  // hub edges exist only toward original entities, so NO_OP is the only move
  const auto acts = admissible_actions(aug, q, WalkState{"hub", 0}, EpisodeConfig{});
  REQUIRE(acts.size() == 1);
  Tensor latents = add(gather_rows(enc.relations, {enc.relation_index.at(acts[0].relation.name)}),
                       gather_rows(enc.nodes, {enc.entity_index.at(acts[0].target)}));
  auto [probs, scores] = action_distribution(qv, qv, latents, view);
  REQUIRE(probs.numel() == 1);
  CHECK(probs.v[0] == 1.0);
}

TEST_CASE("identical action latents split probability evenly") {
  Model m = small_model();
  ParamView view(m.params, nullptr);
  Rng rng(4);
  Tensor h = Tensor::zeros({m.cfg.d});
  Tensor qv = Tensor::zeros({m.cfg.d});
  for (double& x : h.v) x = rng.uniform(-1.0, 1.0);
  for (double& x : qv.v) x = rng.uniform(-1.0, 1.0);
  Tensor row = Tensor::zeros({1, m.cfg.d});
  for (double& x : row.v) x = rng.uniform(-1.0, 1.0);
  Tensor latents = concat({row, row}, 0);
  auto [probs, scores] = action_distribution(h, qv, latents, view);
  CHECK(probs.v[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(probs.v[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("empty action list is an error") {
  Model m = small_model();
  ParamView view(m.params, nullptr);
  Tensor h = Tensor::zeros({m.cfg.d});
  CHECK_THROWS_AS(action_distribution(h, h, Tensor::zeros({0, m.cfg.d}), view),
                  std::invalid_argument);
}

TEST_CASE("distribution contracts on randomized episodes") {
  Model m = small_model();
  ParamView view(m.params, nullptr);
  const SceneGraph aug = color_graph().augment();
  GraphEncoding enc = m.encode(aug, view);
  const QuestionRecord q = color_question();
  Tensor qv = m.encode_question_vec(q.tokens, view);
  Rng rng(123);
  for (int round = 0; round < 300; ++round) {
    EpisodeTensors ts;
    Rng ep_rng(rng.next());
    EpisodeTrace tr = run_episode(aug, enc, qv, q, m.cfg.episode, m.cfg.policy, m.cfg.d,
                                  view, DecodeMode::sample, &ep_rng, &ts);
    for (const StepRecord& st : tr.steps) {
      double s = 0;
      for (double p : st.probs) {
        CHECK(p >= 0.0);
        s += p;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(st.probs.size() == st.actions.size());  // support == admissible set
      // argmax invariant under uniform shift of all scores
      const double c = ep_rng.uniform(-7.0, 7.0);
      std::vector<double> shifted = st.scores;
      for (double& x : shifted) x += c;
      const auto am = [](const std::vector<double>& v) {
        return std::distance(v.begin(), std::max_element(v.begin(), v.end()));
      };
      Tensor p1 = softmax(Tensor::vec(st.scores));
      Tensor p2 = softmax(Tensor::vec(shifted));
      CHECK(am(p1.v) == am(p2.v));
      for (size_t i = 0; i < p1.v.size(); ++i)
        CHECK(std::abs(p1.v[i] - p2.v[i]) < 1e-12);
    }
  }
}

TEST_CASE("sampling is reproducible and follows the distribution") {
  Rng a(99), b(99);
  const std::vector<double> degenerate = {1.0, 0.0};
  for (int i = 0; i < 100; ++i) CHECK(sample_action(degenerate, a) == 0);

  const std::vector<double> fair = {0.5, 0.5};
  int zeros = 0;
  for (int i = 0; i < 10000; ++i) zeros += sample_action(fair, a) == 0;
  CHECK(zeros >= 4800);
  CHECK(zeros <= 5200);

  Rng c(7), d2(7);
  std::vector<int> s1, s2;
  const std::vector<double> probs = {0.2, 0.3, 0.5};
  for (int i = 0; i < 50; ++i) {
    s1.push_back(sample_action(probs, c));
    s2.push_back(sample_action(probs, d2));
  }
  CHECK(s1 == s2);
}

TEST_CASE("end-to-end log-prob gradient matches finite differences per group") {
  Model m = small_model(4, 21);
  const SceneGraph aug = color_graph().augment();
  const QuestionRecord q = color_question();

  auto logprob = [&](const std::string& pname, const Tensor& x) {
    ParamView view(m.params, Tape::active());
    if (!pname.empty()) view.override_with(pname, x);
    GraphEncoding enc = m.encode(aug, view);
    Tensor qv = m.encode_question_vec(q.tokens, view);
    HistoryState h0 = HistoryState::initial(m.cfg.policy.lstm_layers, m.cfg.d);
    auto [h1, s1] = encode_history(h0, view["policy.start"], m.cfg.policy, view);
    const auto acts = admissible_actions(aug, q, WalkState{"hub", 0}, m.cfg.episode);
    REQUIRE(acts.size() == 4);  // 3 hub edges + NO_OP
    std::vector<int> rel_ix, tgt_ix;
    for (const WalkAction& a : acts) {
      rel_ix.push_back(enc.relation_index.at(a.relation.name));
      tgt_ix.push_back(enc.entity_index.at(a.target));
    }
    Tensor latents = add(gather_rows(enc.relations, rel_ix), gather_rows(enc.nodes, tgt_ix));
    auto [probs, scores] = action_distribution(h1, qv, latents, view);
    return gather_rows(log(probs), {1});
  };

  for (size_t p = 0; p < m.params.size(); ++p) {
    const std::string name = m.params.at(p).name;
    const double err = grad_check(
        [&](const Tensor& x) { return logprob(name, x); }, m.params.value(name), 1e-5);
    INFO("parameter group ", name);
    CHECK(err < 1e-3);
  }
}

TEST_CASE("greedy follows a dominant path and ties break low") {
  Model m = small_model();
  const SceneGraph aug = color_graph().augment();
  const QuestionRecord q = color_question();
  EpisodeTrace g1 = m.greedy_trace(aug, q);
  EpisodeTrace g2 = m.greedy_trace(aug, q);
  CHECK(g1.entities == g2.entities);
  for (const StepRecord& st : g1.steps) {
    const double mx = *std::max_element(st.probs.begin(), st.probs.end());
    CHECK(st.probs[static_cast<size_t>(st.chosen)] == mx);
    for (int i = 0; i < st.chosen; ++i) CHECK(st.probs[static_cast<size_t>(i)] < mx);
  }
}

TEST_CASE("beam width one reproduces greedy on random corpora") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sgwalk-tests-beam";
  fs::remove_all(dir);
  SynthConfig cfg;
  cfg.num_graphs = 13;
  cfg.questions_per_graph = 4;
  cfg.seed = 31;
  generate_synthetic_corpus(cfg, dir.string());
  const Corpus corpus = load_corpus(dir.string());
  Model m = Model::init(small_model().cfg, corpus.vocabulary(), nullptr);
  int compared = 0;
  for (const QuestionRecord& q : corpus.questions) {
    if (compared >= 50) break;
    const SceneGraph aug = corpus.graphs.at(q.graph_id).augment();
    EpisodeTrace g = m.greedy_trace(aug, q);
    EpisodeTrace b = m.beam_trace(aug, q, 1);
    CHECK(g.entities == b.entities);
    ++compared;
  }
  CHECK(compared == 50);
}

TEST_CASE("wide beam finds the globally best trace (vs exhaustive search)") {
  Model m = small_model();
  const SceneGraph aug = color_graph().augment();
  const QuestionRecord q = color_question();
  ParamView view(m.params, nullptr);
  GraphEncoding enc = m.encode(aug, view);
  Tensor qv = m.encode_question_vec(q.tokens, view);

  // brute force: enumerate every length-T action sequence and its log-prob
  struct Best {
    double logp = -1e300;
    std::vector<std::string> entities;
  } best;
  std::function<void(WalkState, HistoryState, Tensor, double, std::vector<std::string>)> dfs =
      [&](WalkState s, HistoryState hist, Tensor a_prev, double logp,
          std::vector<std::string> path) {
        if (s.t == m.cfg.episode.max_steps) {
          if (logp > best.logp) {
            best.logp = logp;
            best.entities = path;
          }
          return;
        }
        auto [h, nh] = encode_history(hist, a_prev, m.cfg.policy, view);
        const auto acts = admissible_actions(aug, q, s, m.cfg.episode);
        std::vector<int> rel_ix, tgt_ix;
        for (const WalkAction& a : acts) {
          rel_ix.push_back(enc.relation_index.at(a.relation.name));
          tgt_ix.push_back(enc.entity_index.at(a.target));
        }
        Tensor latents =
            add(gather_rows(enc.relations, rel_ix), gather_rows(enc.nodes, tgt_ix));
        auto [probs, scores] = action_distribution(h, qv, latents, view);
        for (size_t ai = 0; ai < acts.size(); ++ai) {
          Tensor r = gather_rows(enc.relations, {rel_ix[ai]});
          Tensor e = gather_rows(enc.nodes, {tgt_ix[ai]});
          auto next_path = path;
          next_path.push_back(acts[ai].target);
          dfs(WalkState{acts[ai].target, s.t + 1}, nh,
              reshape(concat({r, e}, 0), {2 * m.cfg.d}), logp + std::log(probs.v[ai]),
              next_path);
        }
      };
  dfs(env_reset(aug, q), HistoryState::initial(m.cfg.policy.lstm_layers, m.cfg.d),
      view["policy.start"], 0.0, {"hub"});

  EpisodeTrace beam = m.beam_trace(aug, q, 4096);
  CHECK(beam.entities == best.entities);
}

TEST_SUITE_END();
