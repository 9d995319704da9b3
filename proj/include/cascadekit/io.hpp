#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace casc {

/// Writes to a sibling temporary file and renames it over `path` once complete.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Collects several output files and publishes them together. Nothing is
/// visible under the final names until commit(); an uncommitted set removes
/// its temporaries on destruction.
class StagedOutputs {
public:
    StagedOutputs() = default;
    StagedOutputs(const StagedOutputs&) = delete;
    StagedOutputs& operator=(const StagedOutputs&) = delete;
    ~StagedOutputs();

    void add(const std::filesystem::path& path, const std::string& content);
    /// Creates missing parent directories, then renames every temporary into place.
    void commit();

    std::size_t size() const noexcept { return staged_.size(); }

private:
    struct Entry {
        std::filesystem::path final_path;
        std::filesystem::path temp_path;
    };
    std::vector<Entry> staged_;
    std::vector<std::filesystem::path> created_dirs_;
    std::filesystem::path stage_dir_;
    bool committed_ = false;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace casc
