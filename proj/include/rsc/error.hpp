#pragma once

#include <stdexcept>
#include <string>

namespace rsc {

/// Base of every error the engine throws. `category()` is the short tag the
/// CLI prints as `error:<category>:`.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

#define RSC_DEFINE_ERROR(Name, tag)                                        \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(tag, what) {}           \
  };

RSC_DEFINE_ERROR(ShapeError, "shape")
RSC_DEFINE_ERROR(RangeError, "range")
RSC_DEFINE_ERROR(StateError, "state")
RSC_DEFINE_ERROR(DomainError, "domain")
RSC_DEFINE_ERROR(ProfileError, "profile")
RSC_DEFINE_ERROR(FormatError, "format")
RSC_DEFINE_ERROR(CompatibilityError, "compatibility")
RSC_DEFINE_ERROR(FileError, "file")
RSC_DEFINE_ERROR(UsageError, "usage")

#undef RSC_DEFINE_ERROR

}  // namespace rsc
