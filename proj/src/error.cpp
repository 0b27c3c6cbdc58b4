#include "omnia/error.hpp"

namespace omnia {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Referential: return "referential";
    case ErrorKind::Geometry: return "geometry";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace omnia
