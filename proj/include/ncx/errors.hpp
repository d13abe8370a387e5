#pragma once

#include <stdexcept>
#include <string>

namespace ncx {

// Every library failure derives from Error so the CLI can map the category to
// an exit code without string matching.
enum class ErrorCategory { Config, Domain, Numerical, Io };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory cat, const std::string& what) : std::runtime_error(what), cat_(cat) {}
    ErrorCategory category() const noexcept { return cat_; }

private:
    ErrorCategory cat_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& w) : Error(ErrorCategory::Config, w) {}
};

// Bad arguments: invalid exponent, dimension mismatch, parameter relations.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& w) : Error(ErrorCategory::Domain, w) {}
};

class ZeroElementError : public DomainError {
public:
    explicit ZeroElementError(const std::string& w) : DomainError(w) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& w) : Error(ErrorCategory::Numerical, w) {}
};

// Symbol does not decay at the box boundary.
class SupportViolation : public NumericalError {
public:
    explicit SupportViolation(const std::string& w) : NumericalError(w) {}
};

// Quantized matrix carries too much mass in the last rows/columns.
class TruncationTailError : public NumericalError {
public:
    explicit TruncationTailError(const std::string& w) : NumericalError(w) {}
};

class CalibrationError : public NumericalError {
public:
    explicit CalibrationError(const std::string& w) : NumericalError(w) {}
};

class DivergenceError : public NumericalError {
public:
    explicit DivergenceError(const std::string& w) : NumericalError(w) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& w) : Error(ErrorCategory::Io, w) {}
};

}  // namespace ncx
