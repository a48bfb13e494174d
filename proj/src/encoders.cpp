#include "encoders.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "rng.hpp"

namespace sgw {

Tensor uniform_init(const Shape& shape, int fan_in, uint64_t seed) {
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
  Tensor t = Tensor::zeros(shape);
  for (double& x : t.v) x = rng.uniform(-scale, scale);
  return t;
}

LabelEmbedder::LabelEmbedder(const Vocab& vocab, const Tensor& base, const Tensor& delta,
                             bool frozen)
    : vocab_(&vocab), base_(&base), delta_(delta), frozen_(frozen) {
  if (base.shape != delta.shape)
    throw std::invalid_argument("embedder: base " + shape_str(base.shape) +
                                " vs delta " + shape_str(delta.shape));
  if (base.rows() != static_cast<int>(vocab.words.size()))
    throw std::invalid_argument("embedder: table rows " + std::to_string(base.rows()) +
                                " != vocabulary size " + std::to_string(vocab.words.size()));
}

Tensor LabelEmbedder::rows_for(const std::vector<int>& ids) const {
  Tensor b = gather_rows(*base_, ids);
  if (frozen_) return b;
  return add(gather_rows(delta_, ids), b);
}

Tensor LabelEmbedder::label_vec(const std::string& label) const {
  return words_vec(tokenize(label));
}

Tensor LabelEmbedder::words_vec(const std::vector<std::string>& words) const {
  return mean_rows(rows_for(vocab_->ids(words)));
}

Tensor LabelEmbedder::tokens_matrix(const std::vector<std::string>& tokens) const {
  return rows_for(vocab_->ids(tokens));
}

namespace {

// relation embedding tokens: base words, plus "inverse" for the marked form
std::vector<std::string> relation_tokens(const RelationLabel& rel) {
  std::vector<std::string> words = tokenize(rel.base);
  if (rel.is_inverse) words.push_back("inverse");
  return words;
}

Tensor stack_rows(const std::vector<Tensor>& rows, int d) {
  return reshape(concat(rows, 0), {static_cast<int>(rows.size()), d});
}

}  // namespace

GraphEncoding encode_graph(const SceneGraph& g, const LabelEmbedder& emb,
                           const GatConfig& cfg, int d, const ParamView& params,
                           const Tensor& to_answer_row, GatAttention* diag) {
  if (!g.augmented())
    throw std::invalid_argument("encode_graph: graph must be augmented");
  if (emb.dim() != d)
    throw std::invalid_argument("encode_graph: table dimension " +
                                std::to_string(emb.dim()) + " != d " + std::to_string(d));
  if (d % cfg.heads != 0)
    throw std::invalid_argument("encode_graph: d must be divisible by head count");

  GraphEncoding enc;
  for (const SceneEntity* e : g.entities()) {
    enc.entity_index[e->id] = static_cast<int>(enc.entity_ids.size());
    enc.entity_ids.push_back(e->id);
  }
  const int n = static_cast<int>(enc.entity_ids.size());

  // sorted unique in-neighborhoods (self-loops put every node in its own)
  std::vector<std::set<int>> in_nb_sets(static_cast<size_t>(n));
  std::set<std::string> rel_names;
  for (const std::string& id : enc.entity_ids) {
    const int src = enc.entity_index.at(id);
    for (const auto& [rel, target] : g.outgoing(id)) {
      in_nb_sets[static_cast<size_t>(enc.entity_index.at(target))].insert(src);
      rel_names.insert(rel.name);
    }
  }
  std::vector<std::vector<int>> in_nb;
  in_nb.reserve(static_cast<size_t>(n));
  for (auto& s : in_nb_sets) in_nb.emplace_back(s.begin(), s.end());

  // initial node features from type labels
  std::vector<Tensor> feat_rows;
  feat_rows.reserve(static_cast<size_t>(n));
  for (const std::string& id : enc.entity_ids)
    feat_rows.push_back(emb.label_vec(g.entity(id).label));
  Tensor x = stack_rows(feat_rows, d);

  const int dh = d / cfg.heads;
  if (diag) {
    diag->weights.assign(static_cast<size_t>(cfg.layers), {});
    diag->in_neighbors = in_nb;
  }
  for (int layer = 0; layer < cfg.layers; ++layer) {
    const std::string lp = "gat.l" + std::to_string(layer);
    std::vector<std::vector<Tensor>> head_out(
        static_cast<size_t>(cfg.heads));  // [head][node] -> [dh]
    if (diag) (*diag).weights[static_cast<size_t>(layer)].resize(static_cast<size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
      const std::string hp = lp + ".h" + std::to_string(h);
      Tensor wh = matmul(x, params[hp + ".w"]);          // [n,dh]
      Tensor s_dst = matmul(wh, params[hp + ".a_dst"]);  // [n]
      Tensor s_src = matmul(wh, params[hp + ".a_src"]);  // [n]
      head_out[static_cast<size_t>(h)].reserve(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        const std::vector<int>& nb = in_nb[static_cast<size_t>(i)];
        Tensor sc = add(gather_rows(s_src, nb), gather_rows(s_dst, {i}));
        Tensor alpha = softmax(leaky_relu(sc, cfg.leak));
        if (diag)
          (*diag).weights[static_cast<size_t>(layer)][static_cast<size_t>(h)].push_back(
              alpha.v);
        head_out[static_cast<size_t>(h)].push_back(matmul(alpha, gather_rows(wh, nb)));
      }
    }
    std::vector<Tensor> node_rows;
    node_rows.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      std::vector<Tensor> parts;
      parts.reserve(static_cast<size_t>(cfg.heads));
      for (int h = 0; h < cfg.heads; ++h)
        parts.push_back(head_out[static_cast<size_t>(h)][static_cast<size_t>(i)]);
      node_rows.push_back(concat(parts, 0));  // [d]
    }
    Tensor hmat = relu(stack_rows(node_rows, d));
    x = cfg.residual ? add(hmat, x) : hmat;
  }
  enc.nodes = x;

  // relation label embeddings; TO_ANSWER appended last
  std::vector<Tensor> rel_rows;
  for (const std::string& name : rel_names) {
    enc.relation_index[name] = static_cast<int>(enc.relation_names.size());
    enc.relation_names.push_back(name);
    const RelationLabel rel = RelationLabel::make(name);
    rel_rows.push_back(emb.words_vec(relation_tokens(rel)));
  }
  enc.relation_index[kToAnswer] = static_cast<int>(enc.relation_names.size());
  enc.relation_names.push_back(kToAnswer);
  rel_rows.push_back(to_answer_row);
  enc.relations = stack_rows(rel_rows, d);
  return enc;
}

namespace {

Tensor positional_encoding(int m, int d) {
  Tensor pe = Tensor::zeros({m, d});
  for (int pos = 0; pos < m; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / d);
      pe.v[static_cast<size_t>(pos) * d + i] = std::sin(angle);
      if (i + 1 < d) pe.v[static_cast<size_t>(pos) * d + i + 1] = std::cos(angle);
    }
  }
  return pe;
}

}  // namespace

Tensor encode_question(const std::vector<std::string>& tokens, const LabelEmbedder& emb,
                       const QuestionEncoderConfig& cfg, int d, const ParamView& params) {
  if (tokens.empty()) throw std::invalid_argument("encode_question: empty question");
  if (static_cast<int>(tokens.size()) > cfg.max_len)
    throw std::invalid_argument("encode_question: question has " +
                                std::to_string(tokens.size()) + " tokens, limit is " +
                                std::to_string(cfg.max_len));
  const int m = static_cast<int>(tokens.size());
  const int dh = d / cfg.heads;
  if (d % cfg.heads != 0)
    throw std::invalid_argument("encode_question: d must be divisible by head count");

  Tensor x = add(emb.tokens_matrix(tokens), positional_encoding(m, d));
  for (int layer = 0; layer < cfg.layers; ++layer) {
    const std::string lp = "qenc.l" + std::to_string(layer);
    Tensor a_in = layer_norm(x, params[lp + ".ln1.g"], params[lp + ".ln1.b"]);
    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
      const std::string hp = lp + ".h" + std::to_string(h);
      Tensor q = matmul(a_in, params[hp + ".wq"]);
      Tensor k = matmul(a_in, params[hp + ".wk"]);
      Tensor v = matmul(a_in, params[hp + ".wv"]);
      heads.push_back(scaled_dot_attention(q, k, v));  // [m,dh]
    }
    x = add(x, matmul(concat(heads, 1), params[lp + ".wo"]));
    Tensor f_in = layer_norm(x, params[lp + ".ln2.g"], params[lp + ".ln2.b"]);
    x = add(x, matmul(relu(matmul(f_in, params[lp + ".ff1"])), params[lp + ".ff2"]));
    (void)dh;
  }
  x = layer_norm(x, params["qenc.lnf.g"], params["qenc.lnf.b"]);
  return mean_rows(x);
}

void register_gat_params(ParamSet& ps, const GatConfig& cfg, int d, uint64_t seed) {
  const int dh = d / cfg.heads;
  for (int layer = 0; layer < cfg.layers; ++layer) {
    for (int h = 0; h < cfg.heads; ++h) {
      const std::string hp = "gat.l" + std::to_string(layer) + ".h" + std::to_string(h);
      ps.add(hp + ".w", uniform_init({d, dh}, d, seed_stream(seed, hp + ".w")));
      ps.add(hp + ".a_dst", uniform_init({dh}, dh, seed_stream(seed, hp + ".a_dst")));
      ps.add(hp + ".a_src", uniform_init({dh}, dh, seed_stream(seed, hp + ".a_src")));
    }
  }
}

void register_question_encoder_params(ParamSet& ps, const QuestionEncoderConfig& cfg, int d,
                                      uint64_t seed) {
  const int dh = d / cfg.heads;
  const int ff = cfg.ff > 0 ? cfg.ff : 4 * d;
  for (int layer = 0; layer < cfg.layers; ++layer) {
    const std::string lp = "qenc.l" + std::to_string(layer);
    for (int h = 0; h < cfg.heads; ++h) {
      const std::string hp = lp + ".h" + std::to_string(h);
      for (const char* w : {".wq", ".wk", ".wv"})
        ps.add(hp + w, uniform_init({d, dh}, d, seed_stream(seed, hp + w)));
    }
    ps.add(lp + ".wo", uniform_init({d, d}, d, seed_stream(seed, lp + ".wo")));
    ps.add(lp + ".ln1.g", Tensor::full({d}, 1.0));
    ps.add(lp + ".ln1.b", Tensor::zeros({d}));
    ps.add(lp + ".ff1", uniform_init({d, ff}, d, seed_stream(seed, lp + ".ff1")));
    ps.add(lp + ".ff2", uniform_init({ff, d}, ff, seed_stream(seed, lp + ".ff2")));
    ps.add(lp + ".ln2.g", Tensor::full({d}, 1.0));
    ps.add(lp + ".ln2.b", Tensor::zeros({d}));
  }
  ps.add("qenc.lnf.g", Tensor::full({d}, 1.0));
  ps.add("qenc.lnf.b", Tensor::zeros({d}));
}

}  // namespace sgw
