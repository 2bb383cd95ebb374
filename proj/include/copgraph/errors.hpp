// Error taxonomy shared by all modules. Each class maps to a distinct CLI
// exit code (see cli.hpp).
#pragma once

#include <stdexcept>
#include <string>

namespace copgraph {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input record; message carries the 1-based line number.
struct ParseError : Error {
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line(line) {}
    std::size_t line;
};

struct EmptyDatasetError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct DimensionError : Error {
    using Error::Error;
};

// A precondition that upstream code was supposed to guarantee does not hold
// (e.g. a zero-degree node after n-core filtering).
struct ContractError : Error {
    using Error::Error;
};

// Invalid parameter combination or protocol/split mismatch.
struct ConfigError : Error {
    using Error::Error;
};

struct UnknownItemError : Error {
    using Error::Error;
};

struct MissingEmbeddingError : Error {
    using Error::Error;
};

// Model (de)serialization failures, each kind reported distinctly.
struct ModelFormatError : Error {
    enum class Kind { BadMagic, Version, Checksum, Truncated };
    ModelFormatError(Kind kind, const std::string& what) : Error(what), kind(kind) {}
    Kind kind;
};

}  // namespace copgraph
