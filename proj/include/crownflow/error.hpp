#pragma once

#include <stdexcept>
#include <string>

namespace crownflow {

/// Validation or I/O failure carrying a stable, machine-parsable id
/// (e.g. "npy.magic", "dims.mismatch").
class Error : public std::runtime_error {
 public:
  Error(std::string id, const std::string& message)
      : std::runtime_error(message), id_(std::move(id)) {}

  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

/// An internal invariant did not hold. Never expected on valid input.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace crownflow
