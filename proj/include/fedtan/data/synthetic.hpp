#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

#include "fedtan/data/dataset.hpp"

namespace fedtan::data {

struct GaussianOptions {
  double center_scale = 3.0;  // std-dev of the class centres around the origin
  double noise = 1.0;         // isotropic std-dev around each centre
};

// Class c occupies rows [c * per_class, (c + 1) * per_class).
inline LabeledDataset synth_gaussian(int class_count, Index per_class, Index input_dim,
                                     std::uint64_t seed, GaussianOptions opts = {}) {
  if (class_count < 1 || per_class < 1 || input_dim < 1)
    throw std::invalid_argument("synth_gaussian: counts must be positive");
  if (!(opts.noise >= 0.0) || !(opts.center_scale >= 0.0))
    throw std::invalid_argument("synth_gaussian: scales must be non-negative");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix centres(class_count, input_dim);
  for (Index c = 0; c < class_count; ++c)
    for (Index j = 0; j < input_dim; ++j) centres(c, j) = opts.center_scale * normal(rng);

  LabeledDataset ds{Matrix(class_count * per_class, input_dim), {}, class_count};
  ds.labels.reserve(static_cast<std::size_t>(class_count * per_class));
  for (int c = 0; c < class_count; ++c)
    for (Index k = 0; k < per_class; ++k) {
      const Index row = c * per_class + k;
      for (Index j = 0; j < input_dim; ++j) ds.samples(row, j) = centres(c, j) + opts.noise * normal(rng);
      ds.labels.push_back(c);
    }
  return ds;
}

}  // namespace fedtan::data
