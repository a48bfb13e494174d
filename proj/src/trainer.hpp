#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "model.hpp"
#include "policy.hpp"

namespace sgw {

struct TrainConfig {
  int rollouts = 8;
  double lr = 1e-3;
  double baseline_decay = 0.99;
  double entropy_beta = 0.01;
  int epochs = 30;
  int batch_size = 16;
  double clip_norm = 5.0;
  uint64_t seed = 1;
  int workers = 1;
  double early_stop_acc = -1.0;  // stop once validation accuracy reaches this; <0 disables
  bool use_baseline = true;

  void validate() const;
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

struct BaselineState {
  double b = 0.0;
};

struct RolloutScalars {
  double reward = 0.0;
  Tensor log_prob;  // recorded on the owning tape
  Tensor entropy;
};

// One question's rollouts: the tape they were recorded on, the parameter
// view watched on that tape, and the per-rollout scalars.
struct QuestionRollouts {
  std::unique_ptr<Tape> tape;
  std::unique_ptr<ParamView> view;
  std::vector<RolloutScalars> rollouts;
  std::vector<EpisodeTrace> traces;
};

struct UpdateStats {
  double mean_reward = 0.0;
  double grad_norm = 0.0;
  double mean_entropy = 0.0;
};

// One REINFORCE ascent step over a batch of question rollouts. Surrogate is
// mean_i (R_i - b) * log pi(trace_i) + beta * mean_i H_i; gradients are
// clipped to clip_norm and applied with Adam. A batch whose gradient is
// exactly zero leaves the parameters untouched.
UpdateStats reinforce_update(std::vector<QuestionRollouts>& batch, BaselineState& baseline,
                             const TrainConfig& cfg, ParamSet& params, long& adam_step);

struct EpochMetrics {
  int epoch = 0;
  double mean_reward = 0.0;
  double val_accuracy = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
};

class Trainer {
 public:
  Trainer(Model& model, const Corpus& corpus, TrainConfig cfg);

  // Runs the configured epochs; keeps the best-validation checkpoint at
  // ckpt_path and the latest state at ckpt_path + ".last"; appends one JSONL
  // metrics line per epoch to metrics_path.
  std::vector<EpochMetrics> train(const std::string& ckpt_path,
                                  const std::string& metrics_path);

  QuestionRollouts rollout_question(const QuestionRecord& q, int epoch, int qindex) const;
  double split_accuracy(const std::string& split) const;
  std::map<std::string, std::string> predict_split(const std::string& split) const;

  const SceneGraph& augmented_graph(const std::string& graph_id) const;

 private:
  Model& model_;
  const Corpus& corpus_;
  TrainConfig cfg_;
  BaselineState baseline_;
  std::map<std::string, SceneGraph> augmented_;
};

}  // namespace sgw
