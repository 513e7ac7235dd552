#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace hml {

// Exception carrying a stable machine-readable code plus the offending
// file/field where known. The CLI surfaces these verbatim as JSON.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message,
          std::string file = {}, std::string field = {})
        : std::runtime_error(message),
          code_(std::move(code)),
          file_(std::move(file)),
          field_(std::move(field)) {}

    const std::string& code() const noexcept { return code_; }
    const std::string& file() const noexcept { return file_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::string code_;
    std::string file_;
    std::string field_;
};

[[noreturn]] inline void fail(std::string code, const std::string& message,
                              std::string file = {}, std::string field = {}) {
    throw Error(std::move(code), message, std::move(file), std::move(field));
}

}  // namespace hml
