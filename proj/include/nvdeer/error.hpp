#pragma once

#include <stdexcept>
#include <string>

namespace nvdeer {

// Raised when an argument lies outside the domain of an operation
// (r <= 0, invalid spin quantum number, non-Hermitian input, ...).
class DomainError : public std::domain_error {
public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

}  // namespace nvdeer
