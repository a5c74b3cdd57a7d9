#pragma once

#include <optional>

#include "deid/error.hpp"

namespace deid::testing {

// Code of the AuditError thrown by fn, or nullopt when it returns normally.
template <class Fn>
std::optional<ErrorCode> error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const AuditError& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace deid::testing
