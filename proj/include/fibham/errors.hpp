#pragma once

#include <stdexcept>
#include <string>

namespace fibham {

// Messages are prefixed with the module name so the CLI can report them as-is.
class Error : public std::runtime_error {
public:
    Error(const std::string& module, const std::string& what)
        : std::runtime_error(module + ": " + what), module_(module) {}
    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class OverflowError : public Error {
public:
    using Error::Error;
};

class NotApplicable : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class BandCountMismatch : public Error {
public:
    BandCountMismatch(int level, long long found, long long expected, int refine)
        : Error("band_engine", "BandCountMismatch at level " + std::to_string(level) + ": found " +
                                   std::to_string(found) + ", expected " + std::to_string(expected) +
                                   "; retry with refinement factor " + std::to_string(refine)),
          level(level), found(found), expected(expected), refinement(refine) {}
    int level;
    long long found;
    long long expected;
    int refinement;
};

class PrecisionExhausted : public Error {
public:
    PrecisionExhausted(int level, const std::string& what)
        : Error("band_engine", "PrecisionExhausted at level " + std::to_string(level) + ": " + what),
          level(level) {}
    int level;
};

class StructureViolation : public Error {
public:
    using Error::Error;
};

class DimensionTooLarge : public Error {
public:
    using Error::Error;
};

class BracketFailure : public Error {
public:
    using Error::Error;
};

class EigenFailure : public Error {
public:
    using Error::Error;
};

class RootNotBracketed : public Error {
public:
    using Error::Error;
};

class NotTransitive : public Error {
public:
    using Error::Error;
};

class CoverageFailure : public Error {
public:
    using Error::Error;
};

class BoundaryContamination : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("cli", what) {}
};

}  // namespace fibham
