#pragma once

#include <stdexcept>
#include <string>

namespace active_mocap {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ACTIVE_MOCAP_ERROR(Name)              \
  class Name : public Error {                 \
   public:                                    \
    explicit Name(const std::string& what)    \
        : Error(#Name ": " + what) {}         \
  }

ACTIVE_MOCAP_ERROR(DegenerateGeometry);
ACTIVE_MOCAP_ERROR(ActionCountMismatch);
ACTIVE_MOCAP_ERROR(TeamTooLarge);
ACTIVE_MOCAP_ERROR(ShapeMismatch);
ACTIVE_MOCAP_ERROR(NoRecordedGraph);
ACTIVE_MOCAP_ERROR(NonFiniteLoss);
ACTIVE_MOCAP_ERROR(UnsupportedCount);
ACTIVE_MOCAP_ERROR(NoSafeAction);
ACTIVE_MOCAP_ERROR(EmptySeries);
ACTIVE_MOCAP_ERROR(ConfigMismatch);
ACTIVE_MOCAP_ERROR(ConfigError);
ACTIVE_MOCAP_ERROR(CheckpointError);
ACTIVE_MOCAP_ERROR(CheckpointVersionMismatch);

#undef ACTIVE_MOCAP_ERROR

}  // namespace active_mocap
