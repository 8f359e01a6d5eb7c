#pragma once

#include <stdexcept>
#include <string>

namespace umt {

/// Error categories used across the pipeline. Each maps to a stable
/// category token (for machine-parseable CLI output) and an exit code:
/// 2 = configuration, 3 = data/artifact, 4 = runtime.
enum class Errc {
  config,
  precondition,
  shape,
  degenerate_image,
  empty_foreground,
  insufficient_foreground,
  empty_corpus,
  single_class_corpus,
  empty_scores,
  missing_material,
  insufficient_images,
  missing_file,
  undecodable_image,
  unknown_role,
  unknown_material,
  bad_magic,
  version_mismatch,
  truncated_file,
  missing_artifact,
  io,
};

const char* errc_name(Errc c);
int errc_exit_code(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }
  const char* category() const { return errc_name(code_); }
  int exit_code() const { return errc_exit_code(code_); }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, Errc code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

}  // namespace umt
