#pragma once

#include <stdexcept>
#include <string>

namespace gridfarm {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IllegalTransition : public Error {
 public:
  using Error::Error;
};

class TimeRegression : public Error {
 public:
  using Error::Error;
};

class PastEvent : public Error {
 public:
  using Error::Error;
};

class InvalidGranularity : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnknownPreset : public Error {
 public:
  using Error::Error;
};

class UnknownFormat : public Error {
 public:
  using Error::Error;
};

class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

class ZeroWallClock : public Error {
 public:
  using Error::Error;
};

class ZeroWorkers : public Error {
 public:
  using Error::Error;
};

class DuplicateWorker : public Error {
 public:
  using Error::Error;
};

class InvalidSession : public Error {
 public:
  using Error::Error;
};

class BindFailure : public Error {
 public:
  using Error::Error;
};

class ConnectionLost : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class RegistrationFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace gridfarm
