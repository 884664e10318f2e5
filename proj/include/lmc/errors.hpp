#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lmc {

/// Invalid model specification (zero width, residual shape mismatch, ...).
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor or vector shapes that do not fit together.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Decoding failure for IDX / CIFAR / checkpoint payloads. Carries the byte
/// offset at which the problem was detected.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// A forward pass produced a NaN or infinite loss.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& what, int epoch = -1, int batch = -1)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

/// Experiment configuration problems; `field` is a dotted path into the config.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error(field.empty() ? what : field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace lmc
