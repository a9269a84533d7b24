#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cardiosep::io {

/// Writes `content` to a sibling temp file then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Collects several outputs and publishes them together: every temp file is
/// written before the first rename, so a failed write leaves no new outputs.
class StagedOutputs {
  public:
    void add(std::filesystem::path path, std::string content);
    void commit();
    std::size_t size() const noexcept { return files_.size(); }

  private:
    std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

}  // namespace cardiosep::io
