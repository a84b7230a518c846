#include "asefd/error.hpp"

namespace asefd {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MissingFile: return "missing_file";
    case Errc::MalformedRow: return "malformed_row";
    case Errc::EmptyFile: return "empty_file";
    case Errc::UnknownActivityCode: return "unknown_activity_code";
    case Errc::InvalidArgument: return "invalid_argument";
    case Errc::OutOfRange: return "out_of_range";
    case Errc::GeometryMismatch: return "geometry_mismatch";
    case Errc::MissingNormParams: return "missing_norm_params";
    case Errc::TooFewSamples: return "too_few_samples";
    case Errc::SingleClass: return "single_class";
    case Errc::SingleSubject: return "single_subject";
    case Errc::NonFiniteLoss: return "non_finite_loss";
    case Errc::LeakageDetected: return "leakage_detected";
    case Errc::BadFormat: return "bad_format";
    case Errc::Config: return "config";
  }
  return "unknown";
}

}  // namespace asefd
