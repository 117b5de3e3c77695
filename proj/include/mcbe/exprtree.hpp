#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcbe/errors.hpp"

namespace mcbe {

enum class OpCode : std::uint8_t {
    Add, Sub, Mul, Div,                       // arity 2, weight 1
    Sin, Cos, Exp, Log, Tan, Tanh,            // arity 1, weight 2
    Square, Cube, Sqrt, Inv                   // arity 1, weight 2
};

struct Operator {
    std::string symbol;
    OpCode code;
    int arity;   // 1 or 2
    int weight;  // 1 for {+,-,*,/}, 2 for the function-call operators
};

/// All operators known to the toolkit, indexed by OpCode.
const std::vector<Operator>& builtin_operators();
const Operator& op_info(OpCode code);
std::optional<OpCode> op_by_symbol(const std::string& symbol);

struct Vocabulary {
    std::string name;
    std::vector<OpCode> ops;  // sorted, unique

    bool contains(OpCode code) const;
    static Vocabulary named(const std::string& name);       // "small" | "medium" | "complete"
    static Vocabulary from_symbols(const std::string& name,
                                   const std::vector<std::string>& symbols);
};

enum class NodeKind : std::uint8_t { Op, Var, Param };

struct Node {
    NodeKind kind = NodeKind::Param;
    OpCode op = OpCode::Add;   // Op nodes
    std::string name;          // Var nodes: concept name
    double value = 0.0;        // Param nodes
    bool trainable = true;     // Param nodes
    int var_index = -1;        // Var nodes: slot in the binding vector, -1 if unresolved
    int child[2] = {-1, -1};
    int n_children = 0;
};

/// Immutable expression tree over named concept variables. Nodes are stored in
/// a flat vector; `root` indexes into it. Operations that change structure
/// return a new tree.
struct ExprTree {
    std::vector<Node> nodes;
    int root = -1;

    bool empty() const { return root < 0; }
    int size() const { return static_cast<int>(nodes.size()); }

    // Builders
    static ExprTree variable(const std::string& name, int var_index = -1);
    static ExprTree parameter(double value, bool trainable = true);
    static ExprTree unary(OpCode op, ExprTree child);
    static ExprTree binary(OpCode op, ExprTree lhs, ExprTree rhs);
};

struct ComplexityProfile {
    int node_count = 0;
    int depth = 0;                 // root counts as depth 1
    int expression_complexity = 0; // sum of subtree sizes over all nodes
    int total_vars = 0;            // unique variables, not occurrences
    int total_ops = 0;
    int weighted_node_count = 0;

    ComplexityProfile& operator+=(const ComplexityProfile& other);
    bool operator==(const ComplexityProfile&) const = default;
};

ExprTree parse_expression(const std::string& text, const Vocabulary& vocab,
                          const std::vector<std::string>& concept_names);

std::string format_expression(const ExprTree& tree);

/// Formats a double the way expression text expects it: shortest round-trip
/// representation, with a trailing ".0" when there is no fractional part.
std::string format_number(double v);

double evaluate(const ExprTree& tree, const std::map<std::string, double>& concepts);

/// Fast path used by training and symbolic regression: variables resolved to
/// slots via their var_index. Returns NaN/inf instead of throwing on domain
/// violations when `strict` is false.
double evaluate_indexed(const ExprTree& tree, const double* values, int n_values,
                        bool strict = true);

/// Resolves every VariableNode's var_index against the given concept order.
/// Throws UnboundVariable for names not in the list.
void bind_variables(ExprTree& tree, const std::vector<std::string>& concept_names);

struct EvalWithGradients {
    double value = 0.0;
    std::map<int, double> param_grads;          // node id -> d value / d param
    std::map<std::string, double> input_grads;  // concept name -> d value / d input
};

EvalWithGradients evaluate_with_gradients(const ExprTree& tree,
                                          const std::map<std::string, double>& concepts);

/// Gradient w.r.t. trainable parameters only, indexed binding. Appends the
/// gradient of each trainable parameter node (in node-id order) to `grads`.
/// Returns the value; non-finite intermediates yield NaN with grads zeroed.
double eval_param_gradients(const ExprTree& tree, const double* values, int n_values,
                            std::vector<double>& grads);

/// Node ids of trainable parameter nodes, in ascending order.
std::vector<int> trainable_parameter_ids(const ExprTree& tree);

ComplexityProfile complexity_profile(const ExprTree& tree);

/// Constant folding + deterministic ordering of commutative (+,*) children.
/// Idempotent. Parameter values are kept, but ordering and TED treat every
/// parameter as a single "const" label.
ExprTree canonicalize(const ExprTree& tree);

/// Zhang-Shasha unit-cost edit distance on ordered trees. Parameters compare
/// as "const" regardless of value. Callers should canonicalize first.
int tree_edit_distance(const ExprTree& a, const ExprTree& b);

/// Exact structural equality (operators, variable names, parameter values).
bool structurally_equal(const ExprTree& a, const ExprTree& b);

/// Structural equality under the TED label convention (parameters collapse
/// to "const").
bool structurally_equal_const(const ExprTree& a, const ExprTree& b);

}  // namespace mcbe
