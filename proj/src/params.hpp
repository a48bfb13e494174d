#pragma once

#include <map>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace sgw {

// One trainable tensor plus its optimizer moments (allocated on first use).
struct Param {
  std::string name;
  Tensor value;
  Tensor m;
  Tensor v;
};

class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor init);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const Tensor& value(const std::string& name) const;
  Tensor& mutable_value(const std::string& name);
  int index_of(const std::string& name) const;

  size_t size() const { return items_.size(); }
  Param& at(size_t i) { return items_[i]; }
  const Param& at(size_t i) const { return items_[i]; }

 private:
  std::vector<Param> items_;
  std::map<std::string, int> index_;
};

// A consistent view of all parameters for one forward pass: recorded on a
// tape (training) or the raw values (inference). Parameters are watched in
// index order so gradient extraction is deterministic.
class ParamView {
 public:
  ParamView(const ParamSet& ps, Tape* tape);
  const Tensor& operator[](const std::string& name) const;
  const Tensor& at_index(int i) const { return rec_[static_cast<size_t>(i)]; }
  const ParamSet& set() const { return *ps_; }
  bool recorded() const { return recorded_; }

  // Substitutes one entry (same shape required); lets probes differentiate
  // with respect to a single group while the rest stay fixed.
  void override_with(const std::string& name, const Tensor& t);

 private:
  const ParamSet* ps_;
  std::vector<Tensor> rec_;
  bool recorded_;
};

}  // namespace sgw
