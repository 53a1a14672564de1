#pragma once

#include <stdexcept>
#include <string>

namespace stsurro {

// Error hierarchy. Every failure the library reports derives from Error so
// callers (and the CLI) can catch one type and still print a precise kind.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

#define STSURRO_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                      \
    public:                                                          \
        explicit Name(const std::string& msg) : Error(#Name, msg) {} \
    }

STSURRO_DEFINE_ERROR(EmptyFieldError);
STSURRO_DEFINE_ERROR(DimensionMismatchError);
STSURRO_DEFINE_ERROR(DuplicateColumnError);
STSURRO_DEFINE_ERROR(IoError);
STSURRO_DEFINE_ERROR(IndexOutOfRangeError);
STSURRO_DEFINE_ERROR(ExclusionTooTightError);
STSURRO_DEFINE_ERROR(TooFewPointsError);
STSURRO_DEFINE_ERROR(NonFiniteInputError);
STSURRO_DEFINE_ERROR(InvalidDimensionError);
STSURRO_DEFINE_ERROR(KExceedsNError);
STSURRO_DEFINE_ERROR(EmptyModelError);
STSURRO_DEFINE_ERROR(FactorizationFailureError);
STSURRO_DEFINE_ERROR(ClusterTooSmallError);
STSURRO_DEFINE_ERROR(AllZeroSpectrumError);
STSURRO_DEFINE_ERROR(OutOfDomainError);
STSURRO_DEFINE_ERROR(ConfigError);

#undef STSURRO_DEFINE_ERROR

}  // namespace stsurro
