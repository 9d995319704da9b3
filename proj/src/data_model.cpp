#include "cascadekit/data_model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cascadekit/error.hpp"
#include "cascadekit/io.hpp"
#include "cascadekit/ltc.hpp"

namespace casc {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

bool parse_double(std::string_view text, double& out) {
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

bool parse_int(std::string_view text, int& out) {
    if (text.empty()) return false;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

struct RawColumns {
    std::size_t width = 0;
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<double> values;
};

// Reads `sample_id,label,<prefix>0,...`. Numeric checks only; domain checks
// (label range, duplicates) are left to the caller, which knows K.
RawColumns read_columns(std::istream& in, const std::string& prefix) {
    RawColumns cols;
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("malformed header: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_commas(line);
    if (header.size() < 3 || header[0] != "sample_id" || header[1] != "label")
        throw ValidationError("malformed header: expected sample_id,label," + prefix + "0,...");
    cols.width = header.size() - 2;
    for (std::size_t j = 0; j < cols.width; ++j) {
        if (header[j + 2] != prefix + std::to_string(j))
            throw ValidationError("malformed header: column " + std::to_string(j + 3) +
                                  " should be " + prefix + std::to_string(j));
    }

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const auto fields = split_commas(line);
        if (fields.size() != cols.width + 2)
            throw FormatError("expected " + std::to_string(cols.width + 2) + " fields, got " +
                                  std::to_string(fields.size()),
                              row);
        if (fields[0].empty()) throw FormatError("empty sample_id", row);
        int label = 0;
        if (!parse_int(fields[1], label)) throw FormatError("unparsable label", row);
        cols.ids.emplace_back(fields[0]);
        cols.labels.push_back(label);
        for (std::size_t j = 0; j < cols.width; ++j) {
            double v = 0.0;
            if (!parse_double(fields[j + 2], v)) throw FormatError("unparsable number", row);
            if (!std::isfinite(v)) throw FormatError("non-finite value", row);
            cols.values.push_back(v);
        }
    }
    return cols;
}

void check_rows(const std::vector<std::string>& ids, const std::vector<int>& labels,
                int num_classes) {
    std::unordered_set<std::string_view> seen;
    seen.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) throw FormatError("label out of range", i + 1);
        if (ids[i].find(',') != std::string::npos) throw FormatError("sample_id contains a comma", i + 1);
        if (!seen.insert(ids[i]).second) throw FormatError("duplicate sample_id '" + ids[i] + "'", i + 1);
    }
}

void write_rows(std::ostream& out, const std::string& prefix, std::size_t width,
                const std::vector<std::string>& ids, const std::vector<int>& labels,
                const std::vector<double>& values) {
    out << "sample_id,label";
    for (std::size_t j = 0; j < width; ++j) out << ',' << prefix << j;
    out << '\n';
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out << ids[i] << ',' << labels[i];
        for (std::size_t j = 0; j < width; ++j) out << ',' << format_real(values[i * width + j]);
        out << '\n';
    }
}

}  // namespace

std::string format_real(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

LogitTable::LogitTable(std::string model_id, int num_classes, std::vector<LogitRow> rows)
    : model_id_(std::move(model_id)), num_classes_(num_classes) {
    if (num_classes < 1) throw ValidationError("num_classes must be positive");
    ids_.reserve(rows.size());
    labels_.reserve(rows.size());
    values_.reserve(rows.size() * static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& r = rows[i];
        if (r.logits.size() != static_cast<std::size_t>(num_classes))
            throw FormatError("expected " + std::to_string(num_classes) + " logits", i + 1);
        for (double v : r.logits)
            if (!std::isfinite(v)) throw FormatError("non-finite logit", i + 1);
        ids_.push_back(std::move(r.sample_id));
        labels_.push_back(r.label);
        values_.insert(values_.end(), r.logits.begin(), r.logits.end());
    }
    check_rows(ids_, labels_, num_classes_);
}

LogitTable LogitTable::with_values(std::vector<double> values) const {
    if (values.size() != values_.size()) throw ValidationError("logit buffer size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i]))
            throw FormatError("non-finite logit", i / static_cast<std::size_t>(num_classes_) + 1);
    LogitTable out = *this;
    out.values_ = std::move(values);
    return out;
}

LogitTable LogitTable::renamed(std::string model_id) const {
    LogitTable out = *this;
    out.model_id_ = std::move(model_id);
    return out;
}

LogitTable load_logit_table(const std::filesystem::path& path, std::string model_id) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open logit table " + path.string());
    auto cols = read_columns(in, "logit_");
    check_rows(cols.ids, cols.labels, static_cast<int>(cols.width));
    if (model_id.empty()) model_id = path.stem().string();

    std::vector<LogitRow> rows(cols.ids.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].sample_id = std::move(cols.ids[i]);
        rows[i].label = cols.labels[i];
        rows[i].logits.assign(cols.values.begin() + static_cast<std::ptrdiff_t>(i * cols.width),
                              cols.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols.width));
    }
    return LogitTable(std::move(model_id), static_cast<int>(cols.width), std::move(rows));
}

void write_logit_table(const LogitTable& table, std::ostream& out) {
    write_rows(out, "logit_", static_cast<std::size_t>(table.num_classes()), table.sample_ids(),
               table.labels(), table.values());
}

void write_logit_table(const LogitTable& table, const std::filesystem::path& path) {
    std::ostringstream buf;
    write_logit_table(table, buf);
    write_file_atomic(path, buf.str());
}

FeatureTable load_feature_table(const std::filesystem::path& path, int num_classes) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open feature table " + path.string());
    auto cols = read_columns(in, "x_");
    check_rows(cols.ids, cols.labels, num_classes);
    FeatureTable t;
    t.dim = cols.width;
    t.num_classes = num_classes;
    t.sample_ids = std::move(cols.ids);
    t.labels = std::move(cols.labels);
    t.values = std::move(cols.values);
    return t;
}

void write_feature_table(const FeatureTable& table, std::ostream& out) {
    write_rows(out, "x_", table.dim, table.sample_ids, table.labels, table.values);
}

ModelProfile::ModelProfile(std::string model_id, double macs, std::optional<double> standalone_accuracy)
    : model_id_(std::move(model_id)), macs_(macs), accuracy_(standalone_accuracy) {
    if (!(macs >= 0.0) || !std::isfinite(macs))
        throw ValidationError("model '" + model_id_ + "': macs must be a finite non-negative number");
    if (accuracy_ && !(*accuracy_ >= 0.0 && *accuracy_ <= 1.0))
        throw ValidationError("model '" + model_id_ + "': standalone_accuracy must lie in [0,1]");
}

ScoreMethod parse_score_method(const std::string& name) {
    if (name == "max_prob") return ScoreMethod::max_prob;
    if (name == "neg_entropy") return ScoreMethod::neg_entropy;
    throw ValidationError("unknown scoring method '" + name + "' (expected max_prob or neg_entropy)");
}

ThresholdPolicy parse_threshold_policy(const std::string& name) {
    if (name == "max_accuracy") return ThresholdPolicy::max_accuracy;
    if (name == "constrained_min_cost") return ThresholdPolicy::constrained_min_cost;
    throw ValidationError("unknown threshold policy '" + name +
                          "' (expected max_accuracy or constrained_min_cost)");
}

std::string to_string(ScoreMethod method) {
    return method == ScoreMethod::max_prob ? "max_prob" : "neg_entropy";
}

std::string to_string(ThresholdPolicy policy) {
    return policy == ThresholdPolicy::max_accuracy ? "max_accuracy" : "constrained_min_cost";
}

namespace {

double number_field(const nlohmann::json& obj, const char* key, const std::string& where) {
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ValidationError(where + ": '" + key + "' must be a number");
    return v.get<double>();
}

}  // namespace

CascadeSpec validate_spec(const nlohmann::json& raw) {
    if (!raw.is_object()) throw ValidationError("cascade config must be an object");
    CascadeSpec spec;

    if (!raw.contains("stages") || !raw["stages"].is_array())
        throw ValidationError("cascade config needs a 'stages' array");
    const auto& stages = raw["stages"];
    if (stages.size() < 2)
        throw ValidationError("at least 2 stages required, got " + std::to_string(stages.size()));

    for (std::size_t m = 0; m < stages.size(); ++m) {
        const auto& s = stages[m];
        const std::string where = "stage " + std::to_string(m + 1);
        if (!s.is_object()) throw ValidationError(where + ": must be an object");
        const std::string id = s.value("model_id", "stage" + std::to_string(m + 1));
        if (!s.contains("macs")) throw ValidationError(where + ": missing 'macs'");
        std::optional<double> acc;
        if (s.contains("standalone_accuracy")) acc = number_field(s, "standalone_accuracy", where);
        StageSpec st{ModelProfile(id, number_field(s, "macs", where), acc), s.value("logits", ""),
                     s.value("cumulative_cost", false)};
        spec.stages.push_back(std::move(st));
    }

    if (raw.contains("thresholds")) {
        const auto& t = raw["thresholds"];
        if (!t.is_array()) throw ValidationError("'thresholds' must be an array");
        if (t.size() != stages.size() - 1)
            throw ValidationError("threshold count mismatch: expected " +
                                  std::to_string(stages.size() - 1) + ", got " + std::to_string(t.size()));
        for (const auto& d : t) {
            if (!d.is_number()) throw ValidationError("thresholds must be numbers");
            const double v = d.get<double>();
            if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("thresholds must lie in [0,1]");
            spec.thresholds.push_back(v);
        }
    } else {
        spec.thresholds.assign(stages.size() - 1, 1.0);
    }

    if (raw.contains("C")) spec.cost = number_field(raw, "C", "config");
    if (!(spec.cost >= 0.0) || !std::isfinite(spec.cost)) throw ValidationError("C must be non-negative");
    for (auto& w : cost_warnings(spec.cost)) spec.warnings.push_back(std::move(w));

    if (raw.contains("w")) {
        spec.loss_weight = number_field(raw, "w", "config");
        if (!(*spec.loss_weight >= 0.0) || !std::isfinite(*spec.loss_weight))
            throw ValidationError("w must be non-negative");
    }
    if (raw.contains("epsilon")) spec.tolerance = number_field(raw, "epsilon", "config");
    if (!(spec.tolerance >= 0.0 && spec.tolerance <= 1.0))
        throw ValidationError("epsilon must lie in [0,1]");
    if (raw.contains("scoring")) spec.scoring = parse_score_method(raw["scoring"].get<std::string>());
    if (raw.contains("policy")) spec.policy = parse_threshold_policy(raw["policy"].get<std::string>());
    if (raw.contains("seed")) spec.seed = raw["seed"].get<std::uint64_t>();
    return spec;
}

JoinedSplit join_tables(std::vector<LogitTable> tables) {
    if (tables.empty()) throw ValidationError("join needs at least one table");
    JoinedSplit split;
    const LogitTable& first = tables.front();
    split.sample_ids = first.sample_ids();
    split.labels = first.labels();

    std::unordered_map<std::string_view, std::size_t> index;
    index.reserve(split.sample_ids.size());
    for (std::size_t i = 0; i < split.sample_ids.size(); ++i) index.emplace(split.sample_ids[i], i);

    for (std::size_t t = 0; t < tables.size(); ++t) {
        const LogitTable& tab = tables[t];
        const std::string who = "table '" + tab.model_id() + "'";
        if (tab.size() != split.size())
            throw ValidationError("join mismatch: " + who + " has " + std::to_string(tab.size()) +
                                  " rows, expected " + std::to_string(split.size()));
        if (t == 0) continue;
        const auto k = static_cast<std::size_t>(tab.num_classes());
        std::vector<double> aligned(tab.values().size());
        std::vector<bool> filled(split.size(), false);
        for (std::size_t r = 0; r < tab.size(); ++r) {
            const auto it = index.find(tab.sample_id(r));
            if (it == index.end())
                throw ValidationError("join mismatch: " + who + " has unknown sample_id '" +
                                      tab.sample_id(r) + "'");
            const std::size_t i = it->second;
            if (tab.label(r) != split.labels[i])
                throw ValidationError("join mismatch: " + who + " disagrees on the label of '" +
                                      tab.sample_id(r) + "'");
            filled[i] = true;
            std::copy(tab.logits(r).begin(), tab.logits(r).end(), aligned.begin() + static_cast<std::ptrdiff_t>(i * k));
        }
        for (std::size_t i = 0; i < filled.size(); ++i)
            if (!filled[i])
                throw ValidationError("join mismatch: " + who + " lacks sample_id '" + split.sample_ids[i] + "'");
        tables[t] = LogitTable(tab.model_id(), tab.num_classes(), [&] {
            std::vector<LogitRow> rows(split.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                rows[i].sample_id = split.sample_ids[i];
                rows[i].label = split.labels[i];
                rows[i].logits.assign(aligned.begin() + static_cast<std::ptrdiff_t>(i * k),
                                      aligned.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
            }
            return rows;
        }());
    }
    split.stages = std::move(tables);
    return split;
}

}  // namespace casc
