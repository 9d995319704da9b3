#include "cascadekit/io.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "cascadekit/error.hpp"

namespace fs = std::filesystem;

namespace casc {

namespace {

std::string unique_suffix() {
    static std::atomic<unsigned> counter{0};
    return ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
}

void write_plain(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    out.close();
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& content) {
    const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
    if (!fs::is_directory(parent)) throw std::runtime_error("output directory does not exist: " + parent.string());
    const fs::path tmp = parent / ("." + path.filename().string() + unique_suffix());
    try {
        write_plain(tmp, content);
        fs::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
}

StagedOutputs::~StagedOutputs() {
    if (committed_) return;
    std::error_code ec;
    if (!stage_dir_.empty()) fs::remove_all(stage_dir_, ec);
}

void StagedOutputs::add(const fs::path& path, const std::string& content) {
    if (committed_) throw std::logic_error("StagedOutputs already committed");
    if (stage_dir_.empty()) {
        stage_dir_ = fs::temp_directory_path() / ("cascadekit" + unique_suffix());
        fs::create_directories(stage_dir_);
    }
    const fs::path tmp = stage_dir_ / std::to_string(staged_.size());
    write_plain(tmp, content);
    staged_.push_back({path, tmp});
}

void StagedOutputs::commit() {
    for (const auto& e : staged_) {
        const fs::path parent = e.final_path.has_parent_path() ? e.final_path.parent_path() : fs::path(".");
        // Record the outermost directory we create so a failure can undo it.
        fs::path probe = parent;
        fs::path outermost;
        while (!probe.empty() && !fs::exists(probe)) {
            outermost = probe;
            probe = probe.parent_path();
        }
        if (!outermost.empty()) {
            fs::create_directories(parent);
            created_dirs_.push_back(outermost);
        }
    }
    std::vector<fs::path> published;
    try {
        for (const auto& e : staged_) {
            // Temporaries may live on another filesystem, so copy beside the
            // target first and rename there.
            const fs::path parent = e.final_path.has_parent_path() ? e.final_path.parent_path() : fs::path(".");
            const fs::path near = parent / ("." + e.final_path.filename().string() + unique_suffix());
            fs::copy_file(e.temp_path, near, fs::copy_options::overwrite_existing);
            fs::rename(near, e.final_path);
            published.push_back(e.final_path);
        }
    } catch (...) {
        std::error_code ec;
        for (const auto& p : published) fs::remove(p, ec);
        for (const auto& d : created_dirs_) fs::remove_all(d, ec);
        throw;
    }
    committed_ = true;
    std::error_code ec;
    fs::remove_all(stage_dir_, ec);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace casc
