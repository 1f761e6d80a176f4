#pragma once

#include <stdexcept>
#include <string>

namespace tapetrack {

// Error carrying a short machine-readable code ("behind-camera",
// "degenerate-pair", ...) next to the human-readable message.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

}  // namespace tapetrack
