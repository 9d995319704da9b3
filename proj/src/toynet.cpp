#include "cascadekit/toynet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "cascadekit/error.hpp"
#include "cascadekit/io.hpp"

namespace casc {

namespace {

constexpr const char* kFormatName = "cascadekit-toynet";
constexpr int kFormatVersion = 1;

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;

}  // namespace

ToyNet::ToyNet(int input_dim, const std::vector<int>& trunk_hidden, const std::vector<std::size_t>& attach,
               int num_classes)
    : input_dim_(input_dim), num_classes_(num_classes) {
    if (input_dim < 1) throw ValidationError("ToyNet: input_dim must be positive");
    if (num_classes < 1) throw ValidationError("ToyNet: num_classes must be positive");
    if (attach.empty()) throw ValidationError("ToyNet: at least one exit required");
    for (std::size_t e = 1; e < attach.size(); ++e)
        if (attach[e] <= attach[e - 1]) throw ValidationError("ToyNet: exit attach indices must be strictly increasing");
    if (attach.back() != trunk_hidden.size())
        throw ValidationError("ToyNet: the last exit must attach after the final trunk layer");

    std::size_t offset = 0;
    int in = input_dim;
    for (int width : trunk_hidden) {
        if (width < 1) throw ValidationError("ToyNet: layer widths must be positive");
        trunk_.push_back({in, width, offset});
        offset += trunk_.back().param_count();
        in = width;
    }
    for (std::size_t a : attach) {
        const int fan_in = a == 0 ? input_dim : trunk_hidden[a - 1];
        exits_.push_back({a, {fan_in, num_classes, offset}});
        offset += exits_.back().layer.param_count();
    }
    params_.assign(offset, 0.0);
}

void ToyNet::init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto fill = [&](const DenseShape& s, double gain) {
        std::normal_distribution<double> gauss(0.0, std::sqrt(gain / s.in));
        for (std::size_t i = 0; i < s.weight_count(); ++i) params_[s.offset + i] = gauss(rng);
    };
    for (const auto& s : trunk_) fill(s, 2.0);
    for (const auto& e : exits_) fill(e.layer, 1.0);
}

ToyNet ToyNet::mlp(int input_dim, const std::vector<int>& hidden, int num_classes, std::uint64_t seed) {
    ToyNet net(input_dim, hidden, {hidden.size()}, num_classes);
    net.init(seed);
    return net;
}

ToyNet ToyNet::multi_exit(int input_dim, const std::vector<int>& trunk_hidden, const std::vector<std::size_t>& attach,
                          int num_classes, std::uint64_t seed) {
    ToyNet net(input_dim, trunk_hidden, attach, num_classes);
    net.init(seed);
    return net;
}

MacsReport ToyNet::macs() const {
    MacsReport r;
    std::uint64_t heads = 0;
    for (const auto& e : exits_) {
        std::uint64_t trunk = 0;
        for (std::size_t l = 0; l < e.attach; ++l) trunk += trunk_[l].macs();
        heads += e.layer.macs();
        r.per_exit_cumulative.push_back(trunk + heads);
    }
    for (const auto& s : trunk_) r.trunk += s.macs();
    r.total = r.per_exit_cumulative.back();
    return r;
}

std::vector<int> ToyNet::layer_sizes() const {
    std::vector<int> sizes{input_dim_};
    for (const auto& s : trunk_) sizes.push_back(s.out);
    sizes.push_back(num_classes_);
    return sizes;
}

MacsReport count_macs(const ToyNet& net) { return net.macs(); }

Eigen::Map<const Eigen::MatrixXd> feature_matrix(const FeatureTable& table) {
    return {table.values.data(), static_cast<Eigen::Index>(table.dim), static_cast<Eigen::Index>(table.size())};
}

std::vector<Eigen::MatrixXd> forward(const ToyNet& net, const Eigen::Ref<const Eigen::MatrixXd>& batch) {
    if (batch.rows() != net.input_dim())
        throw ValidationError("forward: input dimension " + std::to_string(batch.rows()) + " does not match net input " +
                              std::to_string(net.input_dim()));
    std::vector<Eigen::MatrixXd> out;
    out.reserve(net.num_exits());
    std::size_t next_exit = 0;
    auto emit = [&](const Eigen::MatrixXd& a, std::size_t depth) {
        while (next_exit < net.num_exits() && net.exits()[next_exit].attach == depth) {
            const auto& head = net.exits()[next_exit].layer;
            Eigen::MatrixXd z = net.weights(head) * a;
            z.colwise() += net.bias(head);
            out.push_back(std::move(z));
            ++next_exit;
        }
    };
    Eigen::MatrixXd a = batch;
    emit(a, 0);
    for (std::size_t l = 0; l < net.trunk().size(); ++l) {
        const auto& s = net.trunk()[l];
        Eigen::MatrixXd z = net.weights(s) * a;
        z.colwise() += net.bias(s);
        a = z.cwiseMax(0.0);
        emit(a, l + 1);
    }
    return out;
}

namespace {

LogitTable table_from_logits(const Eigen::MatrixXd& z, const FeatureTable& data, std::string model_id) {
    std::vector<LogitRow> rows(data.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].sample_id = data.sample_ids[i];
        rows[i].label = data.labels[i];
        rows[i].logits.assign(z.col(static_cast<Eigen::Index>(i)).data(),
                              z.col(static_cast<Eigen::Index>(i)).data() + z.rows());
    }
    return LogitTable(std::move(model_id), static_cast<int>(z.rows()), std::move(rows));
}

}  // namespace

LogitTable export_logits(const ToyNet& net, const FeatureTable& data, std::string model_id, int exit) {
    const auto all = forward(net, feature_matrix(data));
    const int e = exit < 0 ? static_cast<int>(all.size()) - 1 : exit;
    if (e >= static_cast<int>(all.size())) throw ValidationError("export_logits: exit index out of range");
    return table_from_logits(all[static_cast<std::size_t>(e)], data, std::move(model_id));
}

std::vector<LogitTable> export_all_logits(const ToyNet& net, const FeatureTable& data, const std::string& model_id) {
    const auto all = forward(net, feature_matrix(data));
    std::vector<LogitTable> out;
    for (std::size_t e = 0; e < all.size(); ++e)
        out.push_back(table_from_logits(all[e], data, all.size() == 1 ? model_id : model_id + "-exit" + std::to_string(e + 1)));
    return out;
}

namespace {

nlohmann::json layer_json(const ToyNet& net, const DenseShape& s) {
    const auto w = net.weights(s);
    std::vector<double> row_major;
    row_major.reserve(s.weight_count());
    for (int r = 0; r < s.out; ++r)
        for (int c = 0; c < s.in; ++c) row_major.push_back(w(r, c));
    const auto b = net.bias(s);
    return {{"in", s.in}, {"out", s.out}, {"weights", row_major}, {"bias", std::vector<double>(b.data(), b.data() + s.out)}};
}

void load_layer(ToyNet& net, const DenseShape& s, const nlohmann::json& j) {
    if (j.at("in").get<int>() != s.in || j.at("out").get<int>() != s.out)
        throw ValidationError("toynet: layer shape does not match the declared sizes");
    const auto w = j.at("weights").get<std::vector<double>>();
    const auto b = j.at("bias").get<std::vector<double>>();
    if (w.size() != s.weight_count() || b.size() != static_cast<std::size_t>(s.out))
        throw ValidationError("toynet: weight list length mismatch");
    auto wm = net.weights(s);
    for (int r = 0; r < s.out; ++r)
        for (int c = 0; c < s.in; ++c) wm(r, c) = w[static_cast<std::size_t>(r * s.in + c)];
    auto bm = net.bias(s);
    for (int r = 0; r < s.out; ++r) bm(r) = b[static_cast<std::size_t>(r)];
}

}  // namespace

nlohmann::json to_json(const ToyNet& net) {
    nlohmann::json j;
    j["format"] = kFormatName;
    j["version"] = kFormatVersion;
    j["input_dim"] = net.input_dim();
    j["num_classes"] = net.num_classes();
    j["trunk"] = nlohmann::json::array();
    for (const auto& s : net.trunk()) j["trunk"].push_back(layer_json(net, s));
    j["exits"] = nlohmann::json::array();
    for (const auto& e : net.exits()) {
        auto h = layer_json(net, e.layer);
        h["attach"] = e.attach;
        j["exits"].push_back(std::move(h));
    }
    return j;
}

ToyNet toynet_from_json(const nlohmann::json& raw) {
    try {
        if (raw.at("format").get<std::string>() != kFormatName)
            throw ValidationError("toynet: unknown format tag");
        if (raw.at("version").get<int>() != kFormatVersion)
            throw ValidationError("toynet: unsupported version " + raw.at("version").dump());
        std::vector<int> hidden;
        for (const auto& l : raw.at("trunk")) hidden.push_back(l.at("out").get<int>());
        std::vector<std::size_t> attach;
        for (const auto& e : raw.at("exits")) attach.push_back(e.at("attach").get<std::size_t>());
        ToyNet net(raw.at("input_dim").get<int>(), hidden, attach, raw.at("num_classes").get<int>());
        for (std::size_t l = 0; l < net.trunk_.size(); ++l) load_layer(net, net.trunk_[l], raw["trunk"][l]);
        for (std::size_t e = 0; e < net.exits_.size(); ++e) load_layer(net, net.exits_[e].layer, raw["exits"][e]);
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("toynet: ") + e.what());
    }
}

void save_toynet(const ToyNet& net, const std::filesystem::path& path) {
    write_file_atomic(path, to_json(net).dump(1) + "\n");
}

ToyNet load_toynet(const std::filesystem::path& path) {
    nlohmann::json raw;
    try {
        raw = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("toynet: " + path.string() + ": " + e.what());
    }
    return toynet_from_json(raw);
}

std::uint64_t fingerprint(const ToyNet& net) {
    std::uint64_t h = kFnvOffset;
    for (int s : net.layer_sizes()) h = fnv1a(&s, sizeof(s), h);
    for (const auto& e : net.exits()) h = fnv1a(&e.attach, sizeof(e.attach), h);
    return fnv1a(net.params().data(), net.params().size_bytes(), h);
}

std::uint64_t fingerprint(const FeatureTable& data) {
    std::uint64_t h = kFnvOffset;
    h = fnv1a(&data.dim, sizeof(data.dim), h);
    h = fnv1a(data.labels.data(), data.labels.size() * sizeof(int), h);
    return fnv1a(data.values.data(), data.values.size() * sizeof(double), h);
}

}  // namespace casc
