#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "rng.hpp"

namespace sgw {

using nlohmann::json;

void TrainConfig::validate() const {
  if (rollouts < 1) throw std::invalid_argument("train config: rollouts must be >= 1");
  if (lr <= 0) throw std::invalid_argument("train config: learning rate must be positive");
  if (!(baseline_decay > 0 && baseline_decay < 1))
    throw std::invalid_argument("train config: baseline decay must be in (0,1)");
  if (entropy_beta < 0) throw std::invalid_argument("train config: entropy beta must be >= 0");
  if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
  if (clip_norm <= 0) throw std::invalid_argument("train config: clip norm must be positive");
  if (workers < 1) throw std::invalid_argument("train config: workers must be >= 1");
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["rollouts"] = cfg.rollouts;
  j["lr"] = cfg.lr;
  j["baseline_decay"] = cfg.baseline_decay;
  j["entropy_beta"] = cfg.entropy_beta;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["clip_norm"] = cfg.clip_norm;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["early_stop_acc"] = cfg.early_stop_acc;
  j["use_baseline"] = cfg.use_baseline;
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  static const std::set<std::string> known = {
      "rollouts", "lr", "baseline_decay", "entropy_beta", "epochs",  "batch_size",
      "clip_norm", "seed", "workers", "early_stop_acc", "use_baseline"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::runtime_error("train config: unknown key '" + it.key() + "'");
  TrainConfig cfg;
  cfg.rollouts = j.value("rollouts", cfg.rollouts);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.baseline_decay = j.value("baseline_decay", cfg.baseline_decay);
  cfg.entropy_beta = j.value("entropy_beta", cfg.entropy_beta);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.workers = j.value("workers", cfg.workers);
  cfg.early_stop_acc = j.value("early_stop_acc", cfg.early_stop_acc);
  cfg.use_baseline = j.value("use_baseline", cfg.use_baseline);
  cfg.validate();
  return cfg;
}

UpdateStats reinforce_update(std::vector<QuestionRollouts>& batch, BaselineState& baseline,
                             const TrainConfig& cfg, ParamSet& params, long& adam_step) {
  size_t total_n = 0;
  double reward_sum = 0.0, entropy_sum = 0.0;
  for (const QuestionRollouts& qr : batch) {
    total_n += qr.rollouts.size();
    for (const RolloutScalars& r : qr.rollouts) {
      reward_sum += r.reward;
      entropy_sum += r.entropy.item();
    }
  }
  if (total_n == 0) throw std::invalid_argument("reinforce_update: empty batch");
  const double b = cfg.use_baseline ? baseline.b : 0.0;
  const double inv_n = 1.0 / static_cast<double>(total_n);

  // accumulated gradient per parameter, in parameter order
  std::vector<Tensor> grad(params.size());
  for (size_t i = 0; i < params.size(); ++i) grad[i] = Tensor::zeros(params.at(i).value.shape);

  for (QuestionRollouts& qr : batch) {
    Tensor loss;
    bool first = true;
    {
      TapeScope scope(*qr.tape);
      for (const RolloutScalars& r : qr.rollouts) {
        // descent surrogate: -(R-b) logp - beta H, averaged over the batch
        Tensor term = add(mul(Tensor::scalar(-(r.reward - b) * inv_n), r.log_prob),
                          mul(Tensor::scalar(-cfg.entropy_beta * inv_n), r.entropy));
        loss = first ? term : add(loss, term);
        first = false;
      }
    }
    GradientMap grads = qr.tape->backward(loss);
    for (size_t p = 0; p < params.size(); ++p) {
      const Tensor& gq = grads.at(qr.view->at_index(static_cast<int>(p)));
      for (size_t i = 0; i < gq.v.size(); ++i) grad[p].v[i] += gq.v[i];
    }
  }

  double norm_sq = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    for (double x : grad[p].v) {
      if (!std::isfinite(x))
        throw std::runtime_error("non-finite gradient in parameter group '" +
                                 params.at(p).name + "'");
      norm_sq += x * x;
    }
  }
  const double norm = std::sqrt(norm_sq);
  double applied_norm = norm;

  if (norm > 0.0) {
    const double scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
    applied_norm = norm * scale;
    ++adam_step;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_step));
    for (size_t p = 0; p < params.size(); ++p) {
      Param& pr = params.at(p);
      if (pr.m.v.empty()) {
        pr.m = Tensor::zeros(pr.value.shape);
        pr.v = Tensor::zeros(pr.value.shape);
      }
      for (size_t i = 0; i < pr.value.v.size(); ++i) {
        const double g = grad[p].v[i] * scale;
        pr.m.v[i] = b1 * pr.m.v[i] + (1.0 - b1) * g;
        pr.v.v[i] = b2 * pr.v.v[i] + (1.0 - b2) * g * g;
        pr.value.v[i] -= cfg.lr * (pr.m.v[i] / c1) / (std::sqrt(pr.v.v[i] / c2) + eps);
      }
    }
  }

  const double mean_reward = reward_sum * inv_n;
  baseline.b = cfg.baseline_decay * baseline.b + (1.0 - cfg.baseline_decay) * mean_reward;

  UpdateStats stats;
  stats.mean_reward = mean_reward;
  stats.grad_norm = applied_norm;
  stats.mean_entropy = entropy_sum * inv_n;
  return stats;
}

Trainer::Trainer(Model& model, const Corpus& corpus, TrainConfig cfg)
    : model_(model), corpus_(corpus), cfg_(std::move(cfg)) {
  cfg_.validate();
  baseline_.b = model_.train_state.baseline;
  for (const auto& [gid, g] : corpus_.graphs) augmented_.emplace(gid, g.augment());
}

const SceneGraph& Trainer::augmented_graph(const std::string& graph_id) const {
  auto it = augmented_.find(graph_id);
  if (it == augmented_.end())
    throw std::runtime_error("trainer: unknown graph '" + graph_id + "'");
  return it->second;
}

QuestionRollouts Trainer::rollout_question(const QuestionRecord& q, int epoch,
                                           int qindex) const {
  QuestionRollouts qr;
  qr.tape = std::make_unique<Tape>();
  const SceneGraph& aug = augmented_graph(q.graph_id);
  TapeScope scope(*qr.tape);
  qr.view = std::make_unique<ParamView>(model_.params, qr.tape.get());
  // graph encoding shared by this question's rollouts; re-recorded per update
  GraphEncoding enc = model_.encode(aug, *qr.view);
  Tensor qv = model_.encode_question_vec(q.tokens, *qr.view);
  for (int r = 0; r < cfg_.rollouts; ++r) {
    Rng rng(seed_stream(cfg_.seed, "rollout", static_cast<uint64_t>(epoch),
                        static_cast<uint64_t>(qindex), static_cast<uint64_t>(r)));
    EpisodeTensors ts;
    EpisodeTrace trace =
        run_episode(aug, enc, qv, q, model_.cfg.episode, model_.cfg.policy, model_.cfg.d,
                    *qr.view, DecodeMode::sample, &rng, &ts);
    RolloutScalars rs;
    rs.reward = trace.reward;
    rs.log_prob = std::move(ts.log_prob);
    rs.entropy = std::move(ts.entropy);
    qr.rollouts.push_back(std::move(rs));
    qr.traces.push_back(std::move(trace));
  }
  return qr;
}

std::map<std::string, std::string> Trainer::predict_split(const std::string& split) const {
  std::map<std::string, std::string> preds;
  auto it = corpus_.by_split.find(split);
  if (it == corpus_.by_split.end()) return preds;
  for (int qi : it->second) {
    const QuestionRecord& q = corpus_.questions[static_cast<size_t>(qi)];
    EpisodeTrace trace = model_.greedy_trace(augmented_graph(q.graph_id), q);
    preds[q.qid] = trace_answer(augmented_graph(q.graph_id), trace);
  }
  return preds;
}

double Trainer::split_accuracy(const std::string& split) const {
  auto it = corpus_.by_split.find(split);
  if (it == corpus_.by_split.end() || it->second.empty()) return 0.0;
  const auto preds = predict_split(split);
  int correct = 0;
  for (int qi : it->second) {
    const QuestionRecord& q = corpus_.questions[static_cast<size_t>(qi)];
    if (preds.at(q.qid) == q.answer) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(it->second.size());
}

std::vector<EpochMetrics> Trainer::train(const std::string& ckpt_path,
                                         const std::string& metrics_path) {
  auto split_it = corpus_.by_split.find("train");
  if (split_it == corpus_.by_split.end() || split_it->second.empty())
    throw std::runtime_error("trainer: corpus has no train split");

  std::ofstream metrics(metrics_path, std::ios::binary | std::ios::app);
  if (!metrics) throw std::runtime_error("trainer: cannot write metrics to '" + metrics_path + "'");

  // epoch 0 state is a valid artifact (zero-epoch runs, and a resume anchor)
  model_.train_state.baseline = baseline_.b;
  if (model_.train_state.epochs_done == 0) {
    model_.save(ckpt_path);
    model_.save(ckpt_path + ".last");
  }

  std::vector<EpochMetrics> log;
  long adam_step = model_.train_state.adam_step;
  double best = model_.train_state.best_val;

  for (int epoch = model_.train_state.epochs_done + 1; epoch <= cfg_.epochs; ++epoch) {
    std::vector<int> order = split_it->second;
    Rng shuffle_rng(seed_stream(cfg_.seed, "shuffle", static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double reward_acc = 0.0, entropy_acc = 0.0, norm_acc = 0.0;
    int updates = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg_.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg_.batch_size));
      std::vector<QuestionRollouts> batch(end - start);
      auto run_range = [&](size_t w) {
        for (size_t i = start + w; i < end; i += static_cast<size_t>(cfg_.workers)) {
          const int qi = order[i];
          batch[i - start] = rollout_question(corpus_.questions[static_cast<size_t>(qi)],
                                              epoch, qi);
        }
      };
      if (cfg_.workers > 1) {
        std::vector<std::thread> pool;
        for (int w = 0; w < cfg_.workers; ++w)
          pool.emplace_back(run_range, static_cast<size_t>(w));
        for (auto& t : pool) t.join();
      } else {
        run_range(0);
      }
      UpdateStats stats = reinforce_update(batch, baseline_, cfg_, model_.params, adam_step);
      reward_acc += stats.mean_reward;
      entropy_acc += stats.mean_entropy;
      norm_acc += stats.grad_norm;
      ++updates;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.mean_reward = reward_acc / updates;
    em.entropy = entropy_acc / updates;
    em.grad_norm = norm_acc / updates;
    em.val_accuracy = split_accuracy("validation");
    log.push_back(em);

    json line;
    line["epoch"] = em.epoch;
    line["mean_reward"] = em.mean_reward;
    line["val_accuracy"] = em.val_accuracy;
    line["entropy"] = em.entropy;
    line["grad_norm"] = em.grad_norm;
    metrics << line.dump() << "\n";
    metrics.flush();

    model_.train_state.adam_step = adam_step;
    model_.train_state.baseline = baseline_.b;
    model_.train_state.epochs_done = epoch;
    if (em.val_accuracy >= best) {
      best = em.val_accuracy;
      model_.train_state.best_val = best;
      model_.save(ckpt_path);
    }
    model_.train_state.best_val = best;
    model_.save(ckpt_path + ".last");

    if (cfg_.early_stop_acc >= 0.0 && em.val_accuracy >= cfg_.early_stop_acc) break;
  }
  return log;
}

}  // namespace sgw
