#include "cardiosep/atomic_file.hpp"

#include <fstream>
#include <system_error>

#include "cardiosep/error.hpp"

namespace cardiosep::io {

namespace {

std::filesystem::path temp_for(const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".partial";
    return tmp;
}

void write_raw(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.close();
    if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    StagedOutputs staged;
    staged.add(path, content);
    staged.commit();
}

void StagedOutputs::add(std::filesystem::path path, std::string content) {
    files_.emplace_back(std::move(path), std::move(content));
}

void StagedOutputs::commit() {
    std::vector<std::filesystem::path> written;
    try {
        for (const auto& [path, content] : files_) {
            const auto tmp = temp_for(path);
            write_raw(tmp, content);
            written.push_back(tmp);
        }
    } catch (...) {
        std::error_code ignored;
        for (const auto& tmp : written) std::filesystem::remove(tmp, ignored);
        throw;
    }
    for (const auto& [path, content] : files_) {
        std::error_code ec;
        std::filesystem::rename(temp_for(path), path, ec);
        if (ec) throw IoError("cannot rename output into place: " + path.string() + ": " + ec.message());
    }
    files_.clear();
}

}  // namespace cardiosep::io
