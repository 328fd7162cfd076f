#pragma once

#include <stdexcept>
#include <string>

namespace mecd {

// Error taxonomy shared by the core and the C API. Values are stable; the
// C header mirrors them one-to-one.
enum class Status : int {
  Ok = 0,
  Schema = 1,     // missing key / wrong type in an annotation file
  Length = 2,     // list length mismatch (relation vs events, ...)
  Range = 3,      // timestamp outside [0, duration] or start >= end
  Magic = 4,      // bad magic bytes in a feature file
  Truncated = 5,  // feature payload shorter than the header promises
  Index = 6,      // event index out of the premise range
  Config = 7,     // unsatisfiable generator / run configuration
  Dim = 8,        // feature or embedding width mismatch
  Shape = 9,      // tensor shape mismatch in loss inputs
  Size = 10,      // diagram / vector size mismatch between operands
  Param = 11,     // perturbation parameter out of range
  Empty = 12,     // no training samples
  Io = 13,        // filesystem failure
  Usage = 14,     // bad CLI / config key usage
  Internal = 15,
};

const char* status_name(Status s);

class MecdError : public std::runtime_error {
 public:
  MecdError(Status status, const std::string& message)
      : std::runtime_error(message), status_(status) {}
  Status status() const { return status_; }

 private:
  Status status_;
};

[[noreturn]] inline void fail(Status s, const std::string& msg) {
  throw MecdError(s, msg);
}

}  // namespace mecd
