#pragma once

#include <stdexcept>
#include <string>

namespace caps {

// Coarse failure classes; the CLI maps them onto exit codes
// (1 internal, 2 input, 3 configuration, 4 provider).
enum class ErrorCategory { internal = 1, input = 2, configuration = 3, provider = 4 };

class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual ErrorCategory category() const noexcept { return ErrorCategory::internal; }
};

class InputError : public Error {
public:
  using Error::Error;
  ErrorCategory category() const noexcept override { return ErrorCategory::input; }
};

class ValidationError : public InputError {
public:
  ValidationError(std::string field, const std::string& constraint)
      : InputError(field + " " + constraint), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

class FormatError : public InputError {
public:
  FormatError(std::string location, const std::string& message)
      : InputError(location.empty() ? message : location + ": " + message),
        location_(std::move(location)) {}
  const std::string& location() const noexcept { return location_; }

private:
  std::string location_;
};

class VersionError : public InputError {
public:
  using InputError::InputError;
};

class ConfigError : public Error {
public:
  using Error::Error;
  ErrorCategory category() const noexcept override { return ErrorCategory::configuration; }
};

class ProviderError : public Error {
public:
  using Error::Error;
  ErrorCategory category() const noexcept override { return ErrorCategory::provider; }
};

// A provider answered, but not in the format the prompt asked for.
class ParseError : public ProviderError {
public:
  ParseError(const std::string& message, std::string raw)
      : ProviderError(message + " (raw response: \"" + raw + "\")"), raw_(std::move(raw)) {}
  const std::string& raw_response() const noexcept { return raw_; }

private:
  std::string raw_;
};

// No trained model is loaded where one is required.
class ModelUnavailableError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

class NotFoundError : public InputError {
public:
  using InputError::InputError;
};

#define CAPS_DEFINE_ERROR(Name, Base) \
  class Name : public Base {          \
  public:                             \
    using Base::Base;                 \
  }

CAPS_DEFINE_ERROR(EmptyCohortError, InputError);
CAPS_DEFINE_ERROR(DegenerateCovarianceError, InputError);
CAPS_DEFINE_ERROR(FeatureMismatchError, InputError);
CAPS_DEFINE_ERROR(InsufficientDataError, InputError);
CAPS_DEFINE_ERROR(NonFiniteLabelError, InputError);
CAPS_DEFINE_ERROR(SchemaMismatchError, InputError);
CAPS_DEFINE_ERROR(EmptyActivitiesError, InputError);
CAPS_DEFINE_ERROR(DegenerateLabelsError, InputError);
CAPS_DEFINE_ERROR(CoefficientSumError, InputError);
CAPS_DEFINE_ERROR(UnknownFlagError, InputError);
CAPS_DEFINE_ERROR(EmptyMatrixError, InputError);

#undef CAPS_DEFINE_ERROR

}  // namespace caps
