#include "nngp/error.hpp"

namespace nngp {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::parameter_domain: return "parameter_domain";
    case ErrorKind::duplicate_location: return "duplicate_location";
    case ErrorKind::factorization: return "factorization";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::io: return "io";
    case ErrorKind::state: return "state";
  }
  return "unknown";
}

}  // namespace nngp
