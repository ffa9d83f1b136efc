#pragma once

#include <stdexcept>
#include <string>

namespace aflstm {

// Base of every exception thrown by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define AFLSTM_DEFINE_ERROR(Name)     \
  class Name : public Error {         \
   public:                            \
    using Error::Error;               \
  };

AFLSTM_DEFINE_ERROR(DimensionError)
AFLSTM_DEFINE_ERROR(DegenerateMaskError)
AFLSTM_DEFINE_ERROR(ContractError)
AFLSTM_DEFINE_ERROR(DeterminismError)
AFLSTM_DEFINE_ERROR(VocabularyError)
AFLSTM_DEFINE_ERROR(EmptyStoreError)
AFLSTM_DEFINE_ERROR(DataError)
AFLSTM_DEFINE_ERROR(ParseError)
AFLSTM_DEFINE_ERROR(LabelError)
AFLSTM_DEFINE_ERROR(FormatError)
AFLSTM_DEFINE_ERROR(SizeError)
AFLSTM_DEFINE_ERROR(ConfigError)
AFLSTM_DEFINE_ERROR(LoadError)
AFLSTM_DEFINE_ERROR(CapabilityError)

#undef AFLSTM_DEFINE_ERROR

}  // namespace aflstm
