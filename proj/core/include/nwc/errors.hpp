#pragma once

#include <stdexcept>
#include <string>

namespace nwc {

/// Base for every contract violation raised by the library. `kind()` is a
/// short machine-parsable tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept = 0;
};

#define NWC_DEFINE_ERROR(Name, tag)                            \
  class Name : public Error {                                  \
   public:                                                     \
    using Error::Error;                                        \
    const char* kind() const noexcept override { return tag; } \
  };

NWC_DEFINE_ERROR(InputDomainError, "input-domain")
NWC_DEFINE_ERROR(IndexError, "index")
NWC_DEFINE_ERROR(ShapeError, "shape")
NWC_DEFINE_ERROR(CoverageError, "coverage")
NWC_DEFINE_ERROR(ConfigError, "config")
NWC_DEFINE_ERROR(ContractError, "contract")
NWC_DEFINE_ERROR(DegenerateInputError, "degenerate-input")
NWC_DEFINE_ERROR(FormatError, "format")
NWC_DEFINE_ERROR(DivergenceError, "divergence")
NWC_DEFINE_ERROR(IoError, "io")

#undef NWC_DEFINE_ERROR

}  // namespace nwc
