#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace asefd {

enum class Errc {
  MissingFile,
  MalformedRow,
  EmptyFile,
  UnknownActivityCode,
  InvalidArgument,
  OutOfRange,
  GeometryMismatch,
  MissingNormParams,
  TooFewSamples,
  SingleClass,
  SingleSubject,
  NonFiniteLoss,
  LeakageDetected,
  BadFormat,
  Config,
};

std::string_view errc_name(Errc code) noexcept;

// All library failures surface as this exception; code() identifies the kind.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace asefd
