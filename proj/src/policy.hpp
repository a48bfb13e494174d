#pragma once

#include <optional>
#include <string>
#include <vector>

#include "encoders.hpp"
#include "params.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "walk_env.hpp"

namespace sgw {

struct PolicyConfig {
  int lstm_layers = 2;
  int d_ff = 0;  // 0 -> 2d
};

// Recurrent history state, one (h, c) pair per layer. Zeros at episode start.
struct HistoryState {
  std::vector<LstmState> layers;
  static HistoryState initial(int layers, int d);
};

// h_t and the advanced history from the previous action embedding [r, e].
std::pair<Tensor, HistoryState> encode_history(const HistoryState& h,
                                               const Tensor& prev_action_emb,
                                               const PolicyConfig& cfg,
                                               const ParamView& params);

// Probability vector over the admissible actions: rows of A are the action
// latents r+e, scored against W2 relu(W1 [h, Q]). Returns (probs, scores).
std::pair<Tensor, Tensor> action_distribution(const Tensor& h_t, const Tensor& q_vec,
                                              const Tensor& action_latents,
                                              const ParamView& params);

// Categorical draw; never picks a zero-probability entry.
int sample_action(const std::vector<double>& probs, Rng& rng);

enum class DecodeMode { sample, greedy };

// Recorded log-probability and entropy sums of one episode.
struct EpisodeTensors {
  Tensor log_prob;
  Tensor entropy;
};

EpisodeTrace run_episode(const SceneGraph& g, const GraphEncoding& enc, const Tensor& q_vec,
                         const QuestionRecord& q, const EpisodeConfig& ecfg,
                         const PolicyConfig& pcfg, int d, const ParamView& params,
                         DecodeMode mode, Rng* rng, EpisodeTensors* tensors);

EpisodeTrace beam_decode(const SceneGraph& g, const GraphEncoding& enc, const Tensor& q_vec,
                         const QuestionRecord& q, const EpisodeConfig& ecfg,
                         const PolicyConfig& pcfg, int d, const ParamView& params, int beam);

void register_policy_params(ParamSet& ps, const PolicyConfig& cfg, int d, uint64_t seed);

}  // namespace sgw
