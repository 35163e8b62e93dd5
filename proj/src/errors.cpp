#include "battbench/errors.hpp"

namespace battbench {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::InvalidAction: return "invalid action";
    case ErrorKind::SeriesExhausted: return "series exhausted";
    case ErrorKind::Alignment: return "alignment";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Size: return "size";
    case ErrorKind::State: return "state";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace battbench
