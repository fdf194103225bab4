#pragma once

#include <stdexcept>
#include <string>

namespace iavla {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class CodecError : public Error {
 public:
  using Error::Error;
};

/// Undecodable image or payload supplied by a caller.
class InputError : public Error {
 public:
  using Error::Error;
};

class AnchorError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Segmenter/tracker/VLM service unreachable or answered with a protocol error.
class BackendError : public Error {
 public:
  using Error::Error;
};

class TrackInitError : public Error {
 public:
  using Error::Error;
};

class SessionError : public Error {
 public:
  using Error::Error;
};

class GenError : public Error {
 public:
  using Error::Error;
};

class ResolveError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Preprocessing failure tagged with the stage that failed
/// ("masking", "vlm_selection", "annotate", "timeout", "backend").
class PreprocessError : public Error {
 public:
  PreprocessError(std::string stage, const std::string& what)
      : Error(what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace iavla
