#include "model.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "rng.hpp"

namespace sgw {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& context) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key()))
      throw std::runtime_error(context + ": unknown key '" + it.key() + "'");
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["d"] = cfg.d;
  j["gat"] = {{"layers", cfg.gat.layers},
              {"heads", cfg.gat.heads},
              {"leak", cfg.gat.leak},
              {"residual", cfg.gat.residual}};
  j["qenc"] = {{"layers", cfg.qenc.layers},
               {"heads", cfg.qenc.heads},
               {"ff", cfg.qenc.ff},
               {"max_len", cfg.qenc.max_len}};
  j["policy"] = {{"lstm_layers", cfg.policy.lstm_layers}, {"d_ff", cfg.policy.d_ff}};
  j["episode"] = {{"T", cfg.episode.max_steps},
                  {"binary_final_injection", cfg.episode.binary_final_injection}};
  j["freeze_embeddings"] = cfg.freeze_embeddings;
  j["seed"] = cfg.seed;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  reject_unknown(j, {"d", "gat", "qenc", "policy", "episode", "freeze_embeddings", "seed"},
                 "model config");
  ModelConfig cfg;
  cfg.d = j.value("d", cfg.d);
  if (j.contains("gat")) {
    const json& g = j["gat"];
    reject_unknown(g, {"layers", "heads", "leak", "residual"}, "model config: gat");
    cfg.gat.layers = g.value("layers", cfg.gat.layers);
    cfg.gat.heads = g.value("heads", cfg.gat.heads);
    cfg.gat.leak = g.value("leak", cfg.gat.leak);
    cfg.gat.residual = g.value("residual", cfg.gat.residual);
  }
  if (j.contains("qenc")) {
    const json& g = j["qenc"];
    reject_unknown(g, {"layers", "heads", "ff", "max_len"}, "model config: qenc");
    cfg.qenc.layers = g.value("layers", cfg.qenc.layers);
    cfg.qenc.heads = g.value("heads", cfg.qenc.heads);
    cfg.qenc.ff = g.value("ff", cfg.qenc.ff);
    cfg.qenc.max_len = g.value("max_len", cfg.qenc.max_len);
  }
  if (j.contains("policy")) {
    const json& g = j["policy"];
    reject_unknown(g, {"lstm_layers", "d_ff"}, "model config: policy");
    cfg.policy.lstm_layers = g.value("lstm_layers", cfg.policy.lstm_layers);
    cfg.policy.d_ff = g.value("d_ff", cfg.policy.d_ff);
  }
  if (j.contains("episode")) {
    const json& g = j["episode"];
    reject_unknown(g, {"T", "binary_final_injection"}, "model config: episode");
    cfg.episode.max_steps = g.value("T", cfg.episode.max_steps);
    cfg.episode.binary_final_injection =
        g.value("binary_final_injection", cfg.episode.binary_final_injection);
  }
  cfg.freeze_embeddings = j.value("freeze_embeddings", cfg.freeze_embeddings);
  cfg.seed = j.value("seed", cfg.seed);
  if (cfg.episode.max_steps < 1) throw std::runtime_error("model config: T must be >= 1");
  return cfg;
}

Model Model::init(const ModelConfig& cfg, const std::vector<std::string>& vocab_words,
                  const EmbeddingTable* pretrained) {
  Model m;
  m.cfg = cfg;
  m.vocab = Vocab::build(vocab_words);
  const int v = static_cast<int>(m.vocab.words.size());
  if (pretrained && pretrained->dim != cfg.d)
    throw std::invalid_argument("model: embedding file dimension " +
                                std::to_string(pretrained->dim) + " != d " +
                                std::to_string(cfg.d));
  m.base_emb = Tensor::zeros({v, cfg.d});
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  for (int i = 0; i < v; ++i) {
    const std::string& word = m.vocab.words[static_cast<size_t>(i)];
    double* row = m.base_emb.v.data() + static_cast<size_t>(i) * cfg.d;
    if (pretrained && pretrained->contains(word)) {
      const std::vector<double>& vec = pretrained->lookup(word);
      std::copy(vec.begin(), vec.end(), row);
    } else {
      // seeded by the word itself, so vectors do not depend on vocab order
      Rng rng(seed_stream(cfg.seed, "base-emb", fnv1a(word)));
      for (int jx = 0; jx < cfg.d; ++jx) row[jx] = rng.uniform(-scale, scale);
    }
  }
  m.params.add("emb.delta", Tensor::zeros({v, cfg.d}));
  register_gat_params(m.params, cfg.gat, cfg.d, cfg.seed);
  register_question_encoder_params(m.params, cfg.qenc, cfg.d, cfg.seed);
  register_policy_params(m.params, cfg.policy, cfg.d, cfg.seed);
  return m;
}

LabelEmbedder Model::embedder(const ParamView& view) const {
  return LabelEmbedder(vocab, base_emb, view["emb.delta"], cfg.freeze_embeddings);
}

GraphEncoding Model::encode(const SceneGraph& augmented, const ParamView& view,
                            GatAttention* diag) const {
  const LabelEmbedder emb = embedder(view);
  return encode_graph(augmented, emb, cfg.gat, cfg.d, view, view["policy.to_answer"], diag);
}

Tensor Model::encode_question_vec(const std::vector<std::string>& tokens,
                                  const ParamView& view) const {
  const LabelEmbedder emb = embedder(view);
  return encode_question(tokens, emb, cfg.qenc, cfg.d, view);
}

EpisodeTrace Model::greedy_trace(const SceneGraph& augmented, const QuestionRecord& q) const {
  ParamView view(params, nullptr);
  GraphEncoding enc = encode(augmented, view);
  Tensor qv = encode_question_vec(q.tokens, view);
  return run_episode(augmented, enc, qv, q, cfg.episode, cfg.policy, cfg.d, view,
                     DecodeMode::greedy, nullptr, nullptr);
}

EpisodeTrace Model::beam_trace(const SceneGraph& augmented, const QuestionRecord& q,
                               int beam) const {
  ParamView view(params, nullptr);
  GraphEncoding enc = encode(augmented, view);
  Tensor qv = encode_question_vec(q.tokens, view);
  return beam_decode(augmented, enc, qv, q, cfg.episode, cfg.policy, cfg.d, view, beam);
}

void Model::check_vocab(const std::vector<std::string>& corpus_vocab) const {
  const Vocab v = Vocab::build(corpus_vocab);
  if (v.hash() != vocab.hash())
    throw std::runtime_error(
        "checkpoint: corpus vocabulary does not match the checkpoint vocabulary");
}

namespace {

constexpr char kMagic[8] = {'S', 'G', 'W', 'C', 'K', 'P', 'T', '\x01'};

void put_u32(std::ostream& os, uint32_t x) { os.write(reinterpret_cast<const char*>(&x), 4); }
void put_u64(std::ostream& os, uint64_t x) { os.write(reinterpret_cast<const char*>(&x), 8); }
void put_i64(std::ostream& os, int64_t x) { os.write(reinterpret_cast<const char*>(&x), 8); }
void put_f64(std::ostream& os, double x) { os.write(reinterpret_cast<const char*>(&x), 8); }

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_tensor(std::ostream& os, const Tensor& t) {
  put_u32(os, static_cast<uint32_t>(t.shape.size()));
  for (int e : t.shape) put_u32(os, static_cast<uint32_t>(e));
  os.write(reinterpret_cast<const char*>(t.v.data()),
           static_cast<std::streamsize>(t.v.size() * sizeof(double)));
}

uint32_t get_u32(std::istream& is) {
  uint32_t x = 0;
  is.read(reinterpret_cast<char*>(&x), 4);
  return x;
}
uint64_t get_u64(std::istream& is) {
  uint64_t x = 0;
  is.read(reinterpret_cast<char*>(&x), 8);
  return x;
}
int64_t get_i64(std::istream& is) {
  int64_t x = 0;
  is.read(reinterpret_cast<char*>(&x), 8);
  return x;
}
double get_f64(std::istream& is) {
  double x = 0;
  is.read(reinterpret_cast<char*>(&x), 8);
  return x;
}

std::string get_str(std::istream& is) {
  const uint32_t n = get_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

Tensor get_tensor(std::istream& is) {
  const uint32_t rank = get_u32(is);
  Shape shape;
  for (uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(get_u32(is)));
  Tensor t = Tensor::zeros(shape);
  is.read(reinterpret_cast<char*>(t.v.data()),
          static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  return t;
}

}  // namespace

void Model::save(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write '" + path + "'");
  os.write(kMagic, 8);
  put_str(os, model_config_to_json(cfg));
  put_u64(os, vocab.hash());
  put_u32(os, static_cast<uint32_t>(vocab.words.size()));
  for (const std::string& w : vocab.words) put_str(os, w);
  put_tensor(os, base_emb);
  put_u32(os, static_cast<uint32_t>(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const Param& pr = params.at(i);
    put_str(os, pr.name);
    put_tensor(os, pr.value);
    const uint8_t has_moments = pr.m.v.empty() ? 0 : 1;
    os.write(reinterpret_cast<const char*>(&has_moments), 1);
    if (has_moments) {
      put_tensor(os, pr.m);
      put_tensor(os, pr.v);
    }
  }
  put_i64(os, train_state.adam_step);
  put_f64(os, train_state.baseline);
  put_u32(os, static_cast<uint32_t>(train_state.epochs_done));
  put_f64(os, train_state.best_val);
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Model Model::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: '" + path + "' is not a checkpoint (bad magic)");
  Model m;
  m.cfg = model_config_from_json(get_str(is));
  const uint64_t stored_hash = get_u64(is);
  const uint32_t nwords = get_u32(is);
  std::vector<std::string> words;
  words.reserve(nwords);
  for (uint32_t i = 0; i < nwords; ++i) words.push_back(get_str(is));
  m.vocab.words = words;
  for (size_t i = 0; i < words.size(); ++i) m.vocab.index[words[i]] = static_cast<int>(i);
  if (m.vocab.hash() != stored_hash)
    throw std::runtime_error("checkpoint: vocabulary hash mismatch (corrupt file)");
  m.base_emb = get_tensor(is);
  const uint32_t nparams = get_u32(is);
  for (uint32_t i = 0; i < nparams; ++i) {
    const std::string name = get_str(is);
    Tensor value = get_tensor(is);
    uint8_t has_moments = 0;
    is.read(reinterpret_cast<char*>(&has_moments), 1);
    Tensor& slot = m.params.add(name, std::move(value));
    (void)slot;
    if (has_moments) {
      m.params.at(m.params.size() - 1).m = get_tensor(is);
      m.params.at(m.params.size() - 1).v = get_tensor(is);
    }
  }
  m.train_state.adam_step = get_i64(is);
  m.train_state.baseline = get_f64(is);
  m.train_state.epochs_done = static_cast<int>(get_u32(is));
  m.train_state.best_val = get_f64(is);
  if (!is) throw std::runtime_error("checkpoint: '" + path + "' is truncated");

  // shape audit against a fresh registration of the stored config
  Model fresh = Model::init(m.cfg, std::vector<std::string>(words.begin() + 1, words.end()),
                            nullptr);
  if (fresh.params.size() != m.params.size())
    throw std::runtime_error("checkpoint: parameter group count mismatch");
  for (size_t i = 0; i < m.params.size(); ++i) {
    if (fresh.params.at(i).name != m.params.at(i).name ||
        fresh.params.at(i).value.shape != m.params.at(i).value.shape)
      throw std::runtime_error("checkpoint: parameter group '" + m.params.at(i).name +
                               "' does not match the stored config");
  }
  return m;
}

QuestionRecord make_adhoc_question(const std::string& text, const std::string& graph_id) {
  QuestionRecord q;
  q.qid = "adhoc";
  q.graph_id = graph_id;
  q.tokens = tokenize(text);
  if (q.tokens.empty()) throw std::invalid_argument("question text has no tokens");
  static const std::set<std::string> binary_leads = {
      "is", "are", "was", "were", "do", "does", "did", "has", "have", "can", "could",
      "will", "would"};
  q.type = binary_leads.count(q.tokens.front()) ? QType::binary : QType::open;
  q.answer = q.type == QType::binary ? "yes" : "";  // unknown; reward is not used
  return q;
}

AnswerResult answer_question(const Model& model, const SceneGraph& unaugmented,
                             const std::string& question_text) {
  const SceneGraph aug = unaugmented.augmented() ? unaugmented : unaugmented.augment();
  QuestionRecord q = make_adhoc_question(question_text, aug.id());
  EpisodeTrace trace = model.greedy_trace(aug, q);
  AnswerResult res;
  res.answer = trace_answer(aug, trace);
  trace.reward = 0.0;  // no gold answer for ad-hoc questions
  res.trace = std::move(trace);
  return res;
}

}  // namespace sgw
