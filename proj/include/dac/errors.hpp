#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dac {

// Precondition violations use std::invalid_argument directly.

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
public:
    explicit TrainingDiverged(int epoch)
        : std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch)),
          epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

/// Key (weight) file is unreadable, truncated or fails its checksum.
class CorruptKey : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Key file is well formed but describes a different architecture or format version.
class IncompatibleKey : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// DacMessage failed to parse or its checksum does not verify.
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientSamples : public std::runtime_error {
public:
    InsufficientSamples(const std::string& what, std::size_t required, std::size_t available)
        : std::runtime_error(what + ": need " + std::to_string(required) + ", have " +
                             std::to_string(available)),
          required_(required),
          available_(available) {}
    std::size_t required() const noexcept { return required_; }
    std::size_t available() const noexcept { return available_; }

private:
    std::size_t required_;
    std::size_t available_;
};

}  // namespace dac
