#pragma once

#include <cstddef>
#include <cstdint>

#include "cascadekit/data_model.hpp"
#include "json.hpp"

namespace casc {

/// Gaussian-blob classification data. Each class owns `clusters_per_class`
/// unit-variance blobs whose centers sit at distance `separation` from the
/// origin: evenly spaced on a ring in the first two coordinates when there is
/// one blob per class, otherwise at seeded random directions on the sphere.
struct SyntheticSpec {
    int num_classes = 8;
    int dim = 8;
    std::size_t n_train = 8000;
    std::size_t n_val = 4000;
    std::size_t n_test = 8000;
    double separation = 3.0;
    int clusters_per_class = 1;
    double noise = 1.0;
    std::uint64_t seed = 0;
};

void validate(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& raw);
nlohmann::json to_json(const SyntheticSpec& spec);

struct SyntheticData {
    FeatureTable train;
    FeatureTable val;
    FeatureTable test;
};

/// Deterministic per seed; splits use disjoint id prefixes.
SyntheticData gen_synthetic(const SyntheticSpec& spec);

}  // namespace casc
