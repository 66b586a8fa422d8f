// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace doapnn {

// Root of every error the library raises. The category string is what the
// CLI prints in its single-line error message.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}
  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

#define DOAPNN_DEFINE_ERROR(Name, tag)                                 \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(tag, what) {}       \
  };

DOAPNN_DEFINE_ERROR(DimensionError, "dimension")
DOAPNN_DEFINE_ERROR(StateError, "state")
DOAPNN_DEFINE_ERROR(InputError, "input")
DOAPNN_DEFINE_ERROR(GeometryError, "geometry")
DOAPNN_DEFINE_ERROR(SamplingError, "sampling")
DOAPNN_DEFINE_ERROR(ConfigError, "config")
DOAPNN_DEFINE_ERROR(RoutingError, "routing")
DOAPNN_DEFINE_ERROR(TrainingError, "training")
DOAPNN_DEFINE_ERROR(DataError, "data")
DOAPNN_DEFINE_ERROR(DegenerateSignalError, "degenerate-signal")
DOAPNN_DEFINE_ERROR(FormatError, "format")
DOAPNN_DEFINE_ERROR(IncompatibleError, "incompatible")
DOAPNN_DEFINE_ERROR(CorruptionError, "corruption")
DOAPNN_DEFINE_ERROR(UsageError, "usage")

#undef DOAPNN_DEFINE_ERROR

}  // namespace doapnn
