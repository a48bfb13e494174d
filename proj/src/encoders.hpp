#pragma once

#include <map>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "params.hpp"
#include "scene_graph.hpp"
#include "tensor.hpp"

namespace sgw {

struct GatConfig {
  int layers = 2;
  int heads = 4;
  double leak = 0.2;
  bool residual = true;
};

struct QuestionEncoderConfig {
  int layers = 2;
  int heads = 4;
  int ff = 0;  // 0 -> 4d
  int max_len = 30;
};

// Word vectors are frozen base rows plus a trainable delta table; a label
// embeds as the mean of its word vectors, out-of-vocabulary words map to
// the trainable unknown row.
class LabelEmbedder {
 public:
  LabelEmbedder(const Vocab& vocab, const Tensor& base, const Tensor& delta,
                bool frozen);
  Tensor label_vec(const std::string& label) const;
  Tensor words_vec(const std::vector<std::string>& words) const;
  Tensor tokens_matrix(const std::vector<std::string>& tokens) const;  // [m,d]
  int dim() const { return base_->cols(); }

 private:
  Tensor rows_for(const std::vector<int>& ids) const;
  const Vocab* vocab_;
  const Tensor* base_;
  Tensor delta_;
  bool frozen_;
};

// Context-aware node embeddings plus the relation label embeddings the
// policy builds action latents from. TO_ANSWER is always the last relation.
struct GraphEncoding {
  std::vector<std::string> entity_ids;  // sorted
  std::map<std::string, int> entity_index;
  Tensor nodes;  // [n,d]
  std::vector<std::string> relation_names;
  std::map<std::string, int> relation_index;
  Tensor relations;  // [R,d]
};

// Attention weights of one encode, per layer/head/node, aligned with the
// node's sorted in-neighbor list.
struct GatAttention {
  std::vector<std::vector<std::vector<std::vector<double>>>> weights;
  std::vector<std::vector<int>> in_neighbors;
};

GraphEncoding encode_graph(const SceneGraph& g, const LabelEmbedder& emb,
                           const GatConfig& cfg, int d, const ParamView& params,
                           const Tensor& to_answer_row, GatAttention* diag = nullptr);

Tensor encode_question(const std::vector<std::string>& tokens, const LabelEmbedder& emb,
                       const QuestionEncoderConfig& cfg, int d, const ParamView& params);

// Parameter registration (shapes per config); init is uniform
// [-1/sqrt(fan_in), +1/sqrt(fan_in)] from the given seed stream.
void register_gat_params(ParamSet& ps, const GatConfig& cfg, int d, uint64_t seed);
void register_question_encoder_params(ParamSet& ps, const QuestionEncoderConfig& cfg, int d,
                                      uint64_t seed);

Tensor uniform_init(const Shape& shape, int fan_in, uint64_t seed);

}  // namespace sgw
