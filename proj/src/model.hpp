#pragma once

#include <optional>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "encoders.hpp"
#include "params.hpp"
#include "policy.hpp"
#include "walk_env.hpp"

namespace sgw {

struct ModelConfig {
  int d = 64;
  GatConfig gat;
  QuestionEncoderConfig qenc;
  PolicyConfig policy;
  EpisodeConfig episode;
  bool freeze_embeddings = false;
  uint64_t seed = 1;
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// Persisted training state so a resumed run continues exactly where an
// uninterrupted one would be.
struct TrainState {
  long adam_step = 0;
  double baseline = 0.0;
  int epochs_done = 0;
  double best_val = -1.0;
};

class Model {
 public:
  ModelConfig cfg;
  Vocab vocab;
  Tensor base_emb;  // [V,d], frozen
  ParamSet params;
  TrainState train_state;

  static Model init(const ModelConfig& cfg, const std::vector<std::string>& vocab_words,
                    const EmbeddingTable* pretrained);

  LabelEmbedder embedder(const ParamView& view) const;
  GraphEncoding encode(const SceneGraph& augmented, const ParamView& view,
                       GatAttention* diag = nullptr) const;
  Tensor encode_question_vec(const std::vector<std::string>& tokens,
                             const ParamView& view) const;

  // Greedy walk for one question on an augmented graph.
  EpisodeTrace greedy_trace(const SceneGraph& augmented, const QuestionRecord& q) const;
  EpisodeTrace beam_trace(const SceneGraph& augmented, const QuestionRecord& q,
                          int beam) const;

  void check_vocab(const std::vector<std::string>& corpus_vocab) const;

  void save(const std::string& path) const;
  static Model load(const std::string& path);
};

// Free-text entry point: tokenizes, classifies binary/open by the leading
// interrogative, walks greedily, and reports answer plus trace.
struct AnswerResult {
  std::string answer;
  EpisodeTrace trace;
};
AnswerResult answer_question(const Model& model, const SceneGraph& unaugmented,
                             const std::string& question_text);

QuestionRecord make_adhoc_question(const std::string& text, const std::string& graph_id);

}  // namespace sgw
