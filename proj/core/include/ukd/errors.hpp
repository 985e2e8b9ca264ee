#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ukd {

/// Category tag carried by every library error. The CLI serializes it into
/// the structured error object, so names are part of the external surface.
enum class ErrorKind {
  kDimension,
  kParameter,
  kContractViolation,
  kDegenerateInput,
  kConfiguration,
  kUndefinedMetric,
  kUndefinedTest,
  kDegenerateDataset,
  kCorruption,
  kVersionMismatch,
  kTrainingAbort,
  kIo,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension_error";
    case ErrorKind::kParameter: return "parameter_error";
    case ErrorKind::kContractViolation: return "contract_violation";
    case ErrorKind::kDegenerateInput: return "degenerate_input";
    case ErrorKind::kConfiguration: return "configuration_error";
    case ErrorKind::kUndefinedMetric: return "undefined_metric";
    case ErrorKind::kUndefinedTest: return "undefined_test";
    case ErrorKind::kDegenerateDataset: return "degenerate_dataset";
    case ErrorKind::kCorruption: return "corruption_error";
    case ErrorKind::kVersionMismatch: return "version_mismatch";
    case ErrorKind::kTrainingAbort: return "training_abort";
    case ErrorKind::kIo: return "io_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define UKD_DEFINE_ERROR(Name, Kind)                                \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& message) : Error(Kind, message) {} \
  }

UKD_DEFINE_ERROR(DimensionError, ErrorKind::kDimension);
UKD_DEFINE_ERROR(ParameterError, ErrorKind::kParameter);
UKD_DEFINE_ERROR(ContractViolation, ErrorKind::kContractViolation);
UKD_DEFINE_ERROR(DegenerateInputError, ErrorKind::kDegenerateInput);
UKD_DEFINE_ERROR(ConfigurationError, ErrorKind::kConfiguration);
UKD_DEFINE_ERROR(UndefinedMetricError, ErrorKind::kUndefinedMetric);
UKD_DEFINE_ERROR(UndefinedTestError, ErrorKind::kUndefinedTest);
UKD_DEFINE_ERROR(DegenerateDatasetError, ErrorKind::kDegenerateDataset);
UKD_DEFINE_ERROR(CorruptionError, ErrorKind::kCorruption);
UKD_DEFINE_ERROR(VersionMismatchError, ErrorKind::kVersionMismatch);
UKD_DEFINE_ERROR(IoError, ErrorKind::kIo);

#undef UKD_DEFINE_ERROR

/// Raised when a loss component turns non-finite during training. Carries the
/// offending component name and the step of the last good checkpoint, if any.
class TrainingAbort : public Error {
 public:
  TrainingAbort(std::string component, long long last_good_step,
                const std::string& message)
      : Error(ErrorKind::kTrainingAbort, message),
        component_(std::move(component)),
        last_good_step_(last_good_step) {}

  const std::string& component() const noexcept { return component_; }
  long long last_good_step() const noexcept { return last_good_step_; }

 private:
  std::string component_;
  long long last_good_step_;
};

}  // namespace ukd
