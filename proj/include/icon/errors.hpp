#pragma once

#include <stdexcept>
#include <string>

namespace icon {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define ICON_DEFINE_ERROR(Name)                              \
  struct Name : Error {                                      \
    explicit Name(const std::string& what) : Error(what) {}  \
  }

// numerics
ICON_DEFINE_ERROR(DegenerateVector);
ICON_DEFINE_ERROR(EmptyInput);
ICON_DEFINE_ERROR(BadK);
ICON_DEFINE_ERROR(BadLabel);
ICON_DEFINE_ERROR(DimMismatch);

// scenario
ICON_DEFINE_ERROR(BadConfig);
ICON_DEFINE_ERROR(BadKind);
ICON_DEFINE_ERROR(ParseError);

// model
ICON_DEFINE_ERROR(ShapeMismatch);
ICON_DEFINE_ERROR(StaleCache);

// shift pool
ICON_DEFINE_ERROR(LengthMismatch);
ICON_DEFINE_ERROR(NoCenters);

// incremental classifier
ICON_DEFINE_ERROR(ZeroHistoryMean);
ICON_DEFINE_ERROR(MissingGroup);

// trainer / cli
ICON_DEFINE_ERROR(ConfigError);
ICON_DEFINE_ERROR(DataCoverageError);

// metrics
ICON_DEFINE_ERROR(IncompleteMatrix);
ICON_DEFINE_ERROR(EmptyList);

#undef ICON_DEFINE_ERROR

}  // namespace icon
