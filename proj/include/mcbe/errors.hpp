#pragma once

#include <stdexcept>
#include <string>

namespace mcbe {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Expression parsing
struct SyntaxError : Error {
    SyntaxError(const std::string& msg, std::size_t position)
        : Error(msg + " (at position " + std::to_string(position) + ")"), pos(position) {}
    std::size_t pos;
};
struct UnknownSymbolError : Error {
    explicit UnknownSymbolError(const std::string& symbol)
        : Error("unknown symbol: " + symbol), sym(symbol) {}
    std::string sym;
};

// Evaluation
struct DomainViolation : Error {
    DomainViolation(const std::string& op, int node, double arg)
        : Error("domain violation in '" + op + "' at node " + std::to_string(node) +
                " (argument " + std::to_string(arg) + ")"),
          op_symbol(op), node_id(node) {}
    std::string op_symbol;
    int node_id;
};
struct UnboundVariable : Error {
    explicit UnboundVariable(const std::string& name)
        : Error("unbound variable: " + name), var(name) {}
    std::string var;
};
struct NonDifferentiablePoint : Error {
    NonDifferentiablePoint(const std::string& op, int node)
        : Error("'" + op + "' is not differentiable at node " + std::to_string(node)) {}
};

// Models / training
struct DimensionMismatch : Error {
    using Error::Error;
};
struct DivergenceError : Error {
    using Error::Error;
};
struct NumericalError : Error {
    using Error::Error;
};

// Datasets
struct InvalidSpec : Error {
    using Error::Error;
};
struct SchemaMismatch : Error {
    using Error::Error;
};
struct BadFractions : Error {
    using Error::Error;
};

// Symbolic regression
struct InsufficientData : Error {
    using Error::Error;
};
struct VocabularyTooSmall : Error {
    using Error::Error;
};
struct EmptyArchive : Error {
    using Error::Error;
};
struct NoEntryUnderBound : Error {
    using Error::Error;
};

// CLI / IO
struct ConfigError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct EmptyFile : DataError {
    using DataError::DataError;
};

}  // namespace mcbe
