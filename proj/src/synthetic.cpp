#include "cascadekit/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "cascadekit/error.hpp"

namespace casc {

void validate(const SyntheticSpec& spec) {
    if (spec.num_classes < 2) throw ValidationError("synthetic: num_classes must be at least 2");
    if (spec.dim < 1) throw ValidationError("synthetic: dim must be positive");
    if (spec.n_train == 0 || spec.n_val == 0 || spec.n_test == 0)
        throw ValidationError("synthetic: sample counts must be positive");
    if (!(spec.separation > 0.0) || !std::isfinite(spec.separation))
        throw ValidationError("synthetic: separation must be positive");
    if (spec.clusters_per_class < 1) throw ValidationError("synthetic: clusters_per_class must be positive");
    if (!(spec.noise > 0.0)) throw ValidationError("synthetic: noise must be positive");
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& raw) {
    if (!raw.is_object()) throw ValidationError("synthetic spec must be an object");
    SyntheticSpec s;
    try {
        s.num_classes = raw.value("num_classes", s.num_classes);
        s.dim = raw.value("dim", s.dim);
        s.n_train = raw.value("n_train", s.n_train);
        s.n_val = raw.value("n_val", s.n_val);
        s.n_test = raw.value("n_test", s.n_test);
        s.separation = raw.value("separation", s.separation);
        s.clusters_per_class = raw.value("clusters_per_class", s.clusters_per_class);
        s.noise = raw.value("noise", s.noise);
        s.seed = raw.value("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("synthetic spec: ") + e.what());
    }
    validate(s);
    return s;
}

nlohmann::json to_json(const SyntheticSpec& s) {
    return {{"num_classes", s.num_classes}, {"dim", s.dim},         {"n_train", s.n_train},
            {"n_val", s.n_val},             {"n_test", s.n_test},   {"separation", s.separation},
            {"clusters_per_class", s.clusters_per_class},           {"noise", s.noise},
            {"seed", s.seed}};
}

namespace {

std::vector<double> blob_centers(const SyntheticSpec& spec, std::mt19937_64& rng) {
    const auto k = static_cast<std::size_t>(spec.num_classes);
    const auto d = static_cast<std::size_t>(spec.dim);
    const auto c = static_cast<std::size_t>(spec.clusters_per_class);
    std::vector<double> centers(k * c * d, 0.0);
    if (c == 1 && d >= 2) {
        for (std::size_t j = 0; j < k; ++j) {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(k);
            centers[j * d] = spec.separation * std::cos(angle);
            centers[j * d + 1] = spec.separation * std::sin(angle);
        }
        return centers;
    }
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t b = 0; b < k * c; ++b) {
        double norm = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
            centers[b * d + t] = gauss(rng);
            norm += centers[b * d + t] * centers[b * d + t];
        }
        norm = std::sqrt(norm);
        for (std::size_t t = 0; t < d; ++t) centers[b * d + t] *= spec.separation / norm;
    }
    return centers;
}

FeatureTable sample_split(const SyntheticSpec& spec, const std::vector<double>& centers, std::size_t n,
                          const char* prefix, std::mt19937_64& rng) {
    const auto d = static_cast<std::size_t>(spec.dim);
    std::uniform_int_distribution<int> pick_class(0, spec.num_classes - 1);
    std::uniform_int_distribution<int> pick_cluster(0, spec.clusters_per_class - 1);
    std::normal_distribution<double> gauss(0.0, spec.noise);

    FeatureTable t;
    t.dim = d;
    t.num_classes = spec.num_classes;
    t.sample_ids.reserve(n);
    t.labels.reserve(n);
    t.values.resize(n * d);
    char id[32];
    for (std::size_t i = 0; i < n; ++i) {
        const int label = pick_class(rng);
        const int cluster = pick_cluster(rng);
        const std::size_t blob = static_cast<std::size_t>(label * spec.clusters_per_class + cluster);
        for (std::size_t j = 0; j < d; ++j) t.values[i * d + j] = centers[blob * d + j] + gauss(rng);
        std::snprintf(id, sizeof(id), "%s-%06zu", prefix, i);
        t.sample_ids.emplace_back(id);
        t.labels.push_back(label);
    }
    return t;
}

}  // namespace

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    const auto centers = blob_centers(spec, rng);
    SyntheticData data;
    data.train = sample_split(spec, centers, spec.n_train, "train", rng);
    data.val = sample_split(spec, centers, spec.n_val, "val", rng);
    data.test = sample_split(spec, centers, spec.n_test, "test", rng);
    return data;
}

}  // namespace casc
