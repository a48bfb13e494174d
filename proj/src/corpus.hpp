#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scene_graph.hpp"

namespace sgw {

// Lowercase and split on anything that is not a letter or digit.
std::vector<std::string> tokenize(const std::string& text);
std::string lowercase(const std::string& s);

enum class QType { binary, open };

struct QuestionRecord {
  std::string qid;
  std::string graph_id;
  std::vector<std::string> tokens;
  std::string answer;
  QType type = QType::open;
  std::optional<std::vector<std::string>> valid;
  std::optional<std::vector<std::string>> plausible;
  // Consistency group id; by convention the anchor question's qid.
  std::optional<std::string> group;
  // Generator-witnessed path to the answer (relation, entity) hops, NO_OP
  // padding implied. Empty when unknown.
  std::vector<std::pair<std::string, std::string>> oracle;
};

struct EmbeddingTable {
  int dim = 300;
  std::map<std::string, std::vector<double>> vectors;
  std::vector<double> unk;

  const std::vector<double>& lookup(const std::string& word) const;
  bool contains(const std::string& word) const { return vectors.count(word) > 0; }
};

struct ManifestEntry {
  std::string graph_file;
  std::string question_file;
  std::string split;  // train | validation | test
};

struct CorpusManifest {
  uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
};

struct Corpus {
  std::string dir;
  CorpusManifest manifest;
  std::map<std::string, SceneGraph> graphs;  // un-augmented, by graph id
  std::vector<QuestionRecord> questions;     // file order, all splits
  std::map<std::string, std::vector<int>> by_split;

  const QuestionRecord* find_question(const std::string& qid) const;
  const SceneGraph& graph_for(const QuestionRecord& q) const;
  // Sorted unique words over labels, relation bases, question tokens, and
  // the reserved tokens the encoders rely on.
  std::vector<std::string> vocabulary() const;
};

uint64_t vocab_hash(const std::vector<std::string>& words);

// Fixed word space shared by labels, relations, and question tokens.
// Row 0 is the trainable unknown-token entry.
struct Vocab {
  std::vector<std::string> words;  // words[0] == "<unk>", rest sorted
  std::map<std::string, int> index;

  static Vocab build(const std::vector<std::string>& sorted_words);
  int id(const std::string& word) const;  // 0 for out-of-vocabulary
  std::vector<int> ids(const std::vector<std::string>& tokens) const;
  uint64_t hash() const { return vocab_hash(words); }
};

SceneGraph load_scene_graph(const std::string& path);
SceneGraph parse_scene_graph_json(const std::string& json_text, const std::string& context);
void save_scene_graph(const SceneGraph& g, const std::string& path);
std::string scene_graph_to_json(const SceneGraph& g);

// GQA-format scene graphs: objects keyed by id, each with name, attributes,
// relations [{name, object}]. `json_text` may be a single scene or a map of
// scenes keyed by scene id (then `scene_id` selects; empty picks the only one).
SceneGraph import_gqa(const std::string& json_text, const std::string& scene_id);
bool looks_like_gqa(const std::string& json_text);

std::vector<QuestionRecord> load_questions(const std::string& path);
void save_questions(const std::vector<QuestionRecord>& qs, const std::string& path);

EmbeddingTable load_embeddings(const std::string& path, int dim);

CorpusManifest load_manifest(const std::string& path);
void save_manifest(const CorpusManifest& m, const std::string& path);
Corpus load_corpus(const std::string& dir);

}  // namespace sgw
