#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace popf {

// Base for every domain failure raised by the library. The CLI maps these to
// exit code 1; IoError maps to exit code 2.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

// Case document is missing a field or has one of the wrong type. `path` is a
// JSON-pointer-like location such as "buses[3].v_min".
class SchemaError : public Error {
  public:
    SchemaError(std::string path, const std::string& what)
        : Error(path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

  private:
    std::string path_;
};

class ValidationError : public Error {
  public:
    explicit ValidationError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const noexcept { return violations_; }

  private:
    std::vector<std::string> violations_;
};

class DimensionMismatch : public Error {
  public:
    using Error::Error;
};

class NonConvergence : public Error {
  public:
    NonConvergence(int iterations, double mismatch);
    int iterations() const noexcept { return iterations_; }
    double mismatch() const noexcept { return mismatch_; }

  private:
    int iterations_;
    double mismatch_;
};

class SingularJacobian : public Error {
  public:
    explicit SingularJacobian(int iteration);
};

class Infeasible : public Error {
  public:
    explicit Infeasible(std::vector<std::string> violated);
    const std::vector<std::string>& violated() const noexcept { return violated_; }

  private:
    std::vector<std::string> violated_;
};

// Wraps an oracle failure with the index of the MCS sample that caused it.
class SampleFailure : public Error {
  public:
    SampleFailure(std::size_t sample, const std::string& cause)
        : Error("sample " + std::to_string(sample) + ": " + cause), sample_(sample) {}
    std::size_t sample() const noexcept { return sample_; }

  private:
    std::size_t sample_;
};

class NotPositiveDefinite : public Error {
  public:
    explicit NotPositiveDefinite(const std::string& group)
        : Error("correlation group '" + group + "' is not positive definite"), group_(group) {}
    const std::string& group() const noexcept { return group_; }

  private:
    std::string group_;
};

class NonFiniteGradient : public Error {
  public:
    using Error::Error;
};

class NonFiniteLoss : public Error {
  public:
    using Error::Error;
};

class FormatVersionMismatch : public Error {
  public:
    using Error::Error;
};

class CorruptFile : public Error {
  public:
    using Error::Error;
};

class TooManyRejections : public Error {
  public:
    using Error::Error;
};

}  // namespace popf
