#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "corpus.hpp"

namespace sgw {

// Desk-scale corpus generator: random scene graphs over small object,
// attribute, and relation vocabularies, with template questions whose
// answers are unique and whose witnessing paths are stored and re-checked
// against the augmented graph at generation time.
struct SynthConfig {
  int num_graphs = 20;
  int min_entities = 8;
  int max_entities = 15;
  int questions_per_graph = 10;
  double train_frac = 0.8;
  double val_frac = 0.1;
  uint64_t seed = 1;
  std::vector<std::string> templates = {"attr_lookup", "rel_hop", "exists", "attr_yesno"};
  std::vector<std::string> objects = {
      "ball", "box",   "cat",   "dog",  "tree",  "car",    "chair", "table",
      "lamp", "book",  "cup",   "plate", "bird", "fish",   "shoe",  "hat",
      "door", "window", "clock", "phone", "bottle", "spoon", "fork", "bag"};
  std::map<std::string, std::vector<std::string>> attribute_classes = {
      {"color", {"red", "blue", "green", "yellow", "black", "white"}},
      {"material", {"wood", "metal", "plastic", "glass", "cloth"}},
      {"size", {"small", "large"}}};
  std::vector<std::string> relations = {"left_of", "right_of", "near", "on", "under"};

  void validate() const;
};

std::string synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const std::string& text);

// Writes manifest.json, graphs/, and questions/ under out_dir and returns
// the manifest. Deterministic: same config, byte-identical corpus.
CorpusManifest generate_synthetic_corpus(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace sgw
