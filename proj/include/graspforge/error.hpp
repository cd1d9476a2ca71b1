#pragma once

#include <stdexcept>
#include <string>

namespace graspforge {

/// Broad failure class. The CLI maps each category onto an exit code.
enum class ErrorCategory { Usage, Schema, Numeric, Io };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define GRASPFORGE_DEFINE_ERROR(Name, Category)                       \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what)                           \
        : Error(ErrorCategory::Category, #Name ": " + what) {}       \
  };

// geometry / numerics
GRASPFORGE_DEFINE_ERROR(DegenerateRotation, Numeric)
GRASPFORGE_DEFINE_ERROR(BehindCamera, Numeric)
GRASPFORGE_DEFINE_ERROR(DegenerateConfiguration, Numeric)
GRASPFORGE_DEFINE_ERROR(DegenerateTriangle, Numeric)
GRASPFORGE_DEFINE_ERROR(NonFiniteGradient, Numeric)
GRASPFORGE_DEFINE_ERROR(AllAnchorsFrozen, Numeric)
GRASPFORGE_DEFINE_ERROR(StepSizeUnderflow, Numeric)
GRASPFORGE_DEFINE_ERROR(NonFiniteState, Numeric)

// contract violations on inputs
GRASPFORGE_DEFINE_ERROR(InvalidParameter, Usage)
GRASPFORGE_DEFINE_ERROR(InvalidDimensions, Usage)
GRASPFORGE_DEFINE_ERROR(DimensionMismatch, Usage)
GRASPFORGE_DEFINE_ERROR(OutOfRange, Usage)
GRASPFORGE_DEFINE_ERROR(BadChannel, Usage)
GRASPFORGE_DEFINE_ERROR(UnknownTemplate, Usage)

// data / files
GRASPFORGE_DEFINE_ERROR(EmptyMesh, Schema)
GRASPFORGE_DEFINE_ERROR(ParseError, Schema)
GRASPFORGE_DEFINE_ERROR(SchemaError, Schema)
GRASPFORGE_DEFINE_ERROR(VersionError, Schema)
GRASPFORGE_DEFINE_ERROR(IoError, Io)

#undef GRASPFORGE_DEFINE_ERROR

}  // namespace graspforge
