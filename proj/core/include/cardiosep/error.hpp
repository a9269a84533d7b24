#pragma once

#include <stdexcept>
#include <string>

namespace cardiosep {

// Every failure the library raises derives from one of these. The CLI maps
// the category onto its exit code table.

class InvalidArgument : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class StateError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class UnsupportedFormat : public IoError {
  public:
    using IoError::IoError;
};

class ParseError : public IoError {
  public:
    ParseError(const std::string& what, std::size_t offset)
        : IoError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

  private:
    std::size_t offset_;
};

class CorruptionError : public IoError {
  public:
    using IoError::IoError;
};

class VersionError : public IoError {
  public:
    VersionError(int found, int supported)
        : IoError("checkpoint format version " + std::to_string(found) +
                  " is not supported (this build reads version " + std::to_string(supported) + ")"),
          found_(found),
          supported_(supported) {}

    int found() const noexcept { return found_; }
    int supported() const noexcept { return supported_; }

  private:
    int found_;
    int supported_;
};

}  // namespace cardiosep
