#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedtan/tensor.hpp"

namespace fedtan::data {

struct LabeledDataset {
  Matrix samples;           // count x input_dim
  std::vector<int> labels;  // count
  int class_count = 0;

  Index size() const { return samples.rows(); }
  Index input_dim() const { return samples.cols(); }

  void validate() const {
    if (samples.rows() < 1) throw std::invalid_argument("dataset: no samples");
    if (static_cast<Index>(labels.size()) != samples.rows())
      throw std::invalid_argument("dataset: label count does not match sample count");
    for (int l : labels)
      if (l < 0 || l >= class_count)
        throw std::invalid_argument("dataset: label " + std::to_string(l) + " outside [0, " +
                                    std::to_string(class_count) + ")");
  }

  LabeledDataset subset(std::span<const Index> indices) const {
    LabeledDataset out{Matrix(static_cast<Index>(indices.size()), input_dim()), {}, class_count};
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      out.samples.row(static_cast<Index>(i)) = samples.row(indices[i]);
      out.labels.push_back(labels[static_cast<std::size_t>(indices[i])]);
    }
    return out;
  }

  std::vector<Index> indices_of_class(int c) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) out.push_back(static_cast<Index>(i));
    return out;
  }
};

// First `per_class` samples of every class, in dataset order, interleaved back into
// original order. Throws if any class has fewer samples.
inline LabeledDataset balanced_subset(const LabeledDataset& ds, Index per_class) {
  std::vector<Index> picked;
  std::vector<Index> taken(static_cast<std::size_t>(ds.class_count), 0);
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    auto& n = taken[static_cast<std::size_t>(ds.labels[i])];
    if (n < per_class) {
      ++n;
      picked.push_back(static_cast<Index>(i));
    }
  }
  for (Index n : taken)
    if (n < per_class) throw std::invalid_argument("balanced_subset: class has too few samples");
  return ds.subset(picked);
}

inline LabeledDataset concatenate(std::span<const LabeledDataset> parts) {
  if (parts.empty()) throw std::invalid_argument("concatenate: nothing to join");
  Index rows = 0;
  for (const auto& p : parts) rows += p.size();
  LabeledDataset out{Matrix(rows, parts.front().input_dim()), {}, parts.front().class_count};
  Index r = 0;
  for (const auto& p : parts) {
    require_size(p.input_dim() == out.input_dim(), "concatenate: input dimension mismatch");
    out.samples.middleRows(r, p.size()) = p.samples;
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    r += p.size();
  }
  return out;
}

}  // namespace fedtan::data
