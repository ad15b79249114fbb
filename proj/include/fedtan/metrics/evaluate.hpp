#pragma once

#include <algorithm>
#include <span>
#include <stdexcept>

#include "fedtan/data/dataset.hpp"
#include "fedtan/nn/model.hpp"

namespace fedtan::metrics {

struct Evaluation {
  double accuracy = 0.0;  // in [0, 1]
  double loss = 0.0;      // mean cross-entropy
};

// Accuracy and mean loss of a model on a labelled set, evaluated in chunks.
inline Evaluation evaluate(const nn::NetworkSpec& spec, const nn::ModelParams& params,
                           const data::LabeledDataset& test,
                           const nn::StatsMode& stats = nn::MovingAverageMode{},
                           Index chunk = 2000) {
  if (test.size() < 1) throw std::invalid_argument("evaluate: empty test set");
  // Batch statistics depend on the batch, so that mode must see the whole set at once.
  if (std::holds_alternative<nn::BatchStatsMode>(stats)) chunk = test.size();

  double correct = 0.0;
  double loss = 0.0;
  for (Index start = 0; start < test.size(); start += chunk) {
    const Index rows = std::min(chunk, test.size() - start);
    const Matrix logits = nn::model_predict(spec, params, test.samples.middleRows(start, rows), stats);
    std::span<const int> labels(test.labels.data() + start, static_cast<std::size_t>(rows));
    loss += nn::softmax_cross_entropy(logits, labels).loss * static_cast<double>(rows);
    for (Index r = 0; r < rows; ++r)
      correct += nn::argmax_row(logits, r) == labels[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(test.size());
  return {correct / n, loss / n};
}

}  // namespace fedtan::metrics
