#pragma once

#include <stdexcept>
#include <string>

namespace cl_lab {

enum class ErrorKind {
  Domain,     // precondition violated by the caller
  Numerical,  // divergence, non-convergence, singular input
  Parse,      // malformed file contents
  Io,         // file system failure
  Config,     // bad experiment configuration
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::Domain, what);
}

// Process exit code for an error kind: 2 config, 3 numerical, 4 I/O.
int exit_code_for(ErrorKind kind);

}  // namespace cl_lab
