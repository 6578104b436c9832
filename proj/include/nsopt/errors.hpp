#pragma once

#include <stdexcept>
#include <string>

namespace nsopt {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// variable-space errors
class DuplicateNameError : public Error { public: using Error::Error; };
class EmptyShapeError : public Error { public: using Error::Error; };
class ZeroDimensionError : public Error { public: using Error::Error; };
class ShapeMismatchError : public Error { public: using Error::Error; };
class MissingVariableError : public Error { public: using Error::Error; };
class LengthMismatchError : public Error { public: using Error::Error; };

// autodiff errors
class NonFiniteValueError : public Error { public: using Error::Error; };
class UnsupportedOpError : public Error { public: using Error::Error; };
class UnknownOutputError : public Error { public: using Error::Error; };

// qp errors
class DimensionMismatchError : public Error { public: using Error::Error; };
class NonPsdError : public Error { public: using Error::Error; };
class TooLargeError : public Error { public: using Error::Error; };
class InfeasibleError : public Error { public: using Error::Error; };

// line-search errors
class NotDescentError : public Error { public: using Error::Error; };
class LineSearchFailureError : public Error { public: using Error::Error; };

// configuration / harness errors
class ConfigError : public Error { public: using Error::Error; };
class UnknownSuiteError : public ConfigError { public: using ConfigError::ConfigError; };
class UnknownProblemError : public ConfigError { public: using ConfigError::ConfigError; };

}  // namespace nsopt
