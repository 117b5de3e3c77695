#include "mcbe/exprtree.hpp"

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>

namespace mcbe {

// ---------------------------------------------------------------------------
// Operators and vocabularies

const std::vector<Operator>& builtin_operators() {
    static const std::vector<Operator> ops = {
        {"+", OpCode::Add, 2, 1},    {"-", OpCode::Sub, 2, 1},
        {"*", OpCode::Mul, 2, 1},    {"/", OpCode::Div, 2, 1},
        {"sin", OpCode::Sin, 1, 2},  {"cos", OpCode::Cos, 1, 2},
        {"exp", OpCode::Exp, 1, 2},  {"log", OpCode::Log, 1, 2},
        {"tan", OpCode::Tan, 1, 2},  {"tanh", OpCode::Tanh, 1, 2},
        {"square", OpCode::Square, 1, 2}, {"cube", OpCode::Cube, 1, 2},
        {"sqrt", OpCode::Sqrt, 1, 2},     {"inv", OpCode::Inv, 1, 2},
    };
    return ops;
}

const Operator& op_info(OpCode code) {
    return builtin_operators()[static_cast<std::size_t>(code)];
}

std::optional<OpCode> op_by_symbol(const std::string& symbol) {
    for (const auto& op : builtin_operators())
        if (op.symbol == symbol) return op.code;
    return std::nullopt;
}

bool Vocabulary::contains(OpCode code) const {
    return std::find(ops.begin(), ops.end(), code) != ops.end();
}

Vocabulary Vocabulary::named(const std::string& name) {
    if (name == "small")
        return {"small", {OpCode::Add, OpCode::Sub}};
    if (name == "medium")
        return {"medium", {OpCode::Add, OpCode::Sub, OpCode::Mul}};
    if (name == "complete") {
        Vocabulary v{"complete", {}};
        for (const auto& op : builtin_operators()) v.ops.push_back(op.code);
        return v;
    }
    throw ConfigError("unknown vocabulary name: " + name);
}

Vocabulary Vocabulary::from_symbols(const std::string& name,
                                    const std::vector<std::string>& symbols) {
    Vocabulary v{name, {}};
    for (const auto& s : symbols) {
        auto code = op_by_symbol(s);
        if (!code) throw UnknownSymbolError(s);
        if (!v.contains(*code)) v.ops.push_back(*code);
    }
    if (v.ops.empty()) throw ConfigError("empty vocabulary");
    std::sort(v.ops.begin(), v.ops.end());
    return v;
}

// ---------------------------------------------------------------------------
// Builders

static int append_subtree(std::vector<Node>& out, const ExprTree& src, int idx) {
    const Node& n = src.nodes[idx];
    Node copy = n;
    for (int i = 0; i < n.n_children; ++i)
        copy.child[i] = append_subtree(out, src, n.child[i]);
    out.push_back(copy);
    return static_cast<int>(out.size()) - 1;
}

ExprTree ExprTree::variable(const std::string& name, int var_index) {
    ExprTree t;
    Node n;
    n.kind = NodeKind::Var;
    n.name = name;
    n.var_index = var_index;
    t.nodes.push_back(n);
    t.root = 0;
    return t;
}

ExprTree ExprTree::parameter(double value, bool trainable) {
    ExprTree t;
    Node n;
    n.kind = NodeKind::Param;
    n.value = value;
    n.trainable = trainable;
    t.nodes.push_back(n);
    t.root = 0;
    return t;
}

ExprTree ExprTree::unary(OpCode op, ExprTree child) {
    assert(op_info(op).arity == 1);
    ExprTree t;
    int c = append_subtree(t.nodes, child, child.root);
    Node n;
    n.kind = NodeKind::Op;
    n.op = op;
    n.child[0] = c;
    n.n_children = 1;
    t.nodes.push_back(n);
    t.root = static_cast<int>(t.nodes.size()) - 1;
    return t;
}

ExprTree ExprTree::binary(OpCode op, ExprTree lhs, ExprTree rhs) {
    assert(op_info(op).arity == 2);
    ExprTree t;
    int a = append_subtree(t.nodes, lhs, lhs.root);
    int b = append_subtree(t.nodes, rhs, rhs.root);
    Node n;
    n.kind = NodeKind::Op;
    n.op = op;
    n.child[0] = a;
    n.child[1] = b;
    n.n_children = 2;
    t.nodes.push_back(n);
    t.root = static_cast<int>(t.nodes.size()) - 1;
    return t;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

enum class TokKind { Number, Ident, Plus, Minus, Star, Slash, LParen, RParen, Comma, End };

struct Token {
    TokKind kind;
    std::string text;
    double number = 0.0;
    std::size_t pos = 0;
};

class Lexer {
public:
    explicit Lexer(const std::string& src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }
    Token take() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    void advance() {
        while (i_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[i_]))) ++i_;
        tok_.pos = i_;
        if (i_ >= src_.size()) {
            tok_.kind = TokKind::End;
            tok_.text.clear();
            return;
        }
        char c = src_[i_];
        switch (c) {
            case '+': tok_ = {TokKind::Plus, "+", 0.0, i_++}; return;
            case '-': tok_ = {TokKind::Minus, "-", 0.0, i_++}; return;
            case '*': tok_ = {TokKind::Star, "*", 0.0, i_++}; return;
            case '/': tok_ = {TokKind::Slash, "/", 0.0, i_++}; return;
            case '(': tok_ = {TokKind::LParen, "(", 0.0, i_++}; return;
            case ')': tok_ = {TokKind::RParen, ")", 0.0, i_++}; return;
            case ',': tok_ = {TokKind::Comma, ",", 0.0, i_++}; return;
            default: break;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t start = i_;
            while (i_ < src_.size() &&
                   (std::isdigit(static_cast<unsigned char>(src_[i_])) || src_[i_] == '.'))
                ++i_;
            if (i_ < src_.size() && (src_[i_] == 'e' || src_[i_] == 'E')) {
                std::size_t save = i_;
                ++i_;
                if (i_ < src_.size() && (src_[i_] == '+' || src_[i_] == '-')) ++i_;
                if (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) {
                    while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_])))
                        ++i_;
                } else {
                    i_ = save;  // 'e' belongs to a following identifier
                }
            }
            std::string text = src_.substr(start, i_ - start);
            double value = 0.0;
            auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
            if (ec != std::errc() || p != text.data() + text.size())
                throw SyntaxError("malformed number '" + text + "'", start);
            tok_ = {TokKind::Number, text, value, start};
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = i_;
            while (i_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[i_])) ||
                                        src_[i_] == '_'))
                ++i_;
            tok_ = {TokKind::Ident, src_.substr(start, i_ - start), 0.0, start};
            return;
        }
        throw SyntaxError(std::string("unexpected character '") + c + "'", i_);
    }

    const std::string& src_;
    std::size_t i_ = 0;
    Token tok_;
};

class Parser {
public:
    Parser(const std::string& src, const Vocabulary& vocab,
           const std::vector<std::string>& concept_names)
        : lex_(src), vocab_(vocab), concepts_(concept_names) {}

    ExprTree run() {
        ExprTree t = expr();
        if (lex_.peek().kind != TokKind::End)
            throw SyntaxError("expected end of input, got '" + lex_.peek().text + "'",
                              lex_.peek().pos);
        return t;
    }

private:
    ExprTree expr() {
        ExprTree lhs = term();
        while (lex_.peek().kind == TokKind::Plus || lex_.peek().kind == TokKind::Minus) {
            Token op = lex_.take();
            ExprTree rhs = term();
            OpCode code = op.kind == TokKind::Plus ? OpCode::Add : OpCode::Sub;
            require_in_vocab(code, op);
            lhs = ExprTree::binary(code, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    ExprTree term() {
        ExprTree lhs = factor();
        while (lex_.peek().kind == TokKind::Star || lex_.peek().kind == TokKind::Slash) {
            Token op = lex_.take();
            ExprTree rhs = factor();
            OpCode code = op.kind == TokKind::Star ? OpCode::Mul : OpCode::Div;
            require_in_vocab(code, op);
            lhs = ExprTree::binary(code, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    ExprTree factor() {
        Token t = lex_.peek();
        switch (t.kind) {
            case TokKind::Number:
                lex_.take();
                return ExprTree::parameter(t.number);
            case TokKind::Minus: {
                lex_.take();
                if (lex_.peek().kind == TokKind::Number) {
                    Token num = lex_.take();
                    return ExprTree::parameter(-num.number);
                }
                ExprTree operand = factor();
                require_in_vocab(OpCode::Sub, t);
                return ExprTree::binary(OpCode::Sub, ExprTree::parameter(0.0),
                                        std::move(operand));
            }
            case TokKind::LParen: {
                lex_.take();
                ExprTree inner = expr();
                expect(TokKind::RParen, ")");
                return inner;
            }
            case TokKind::Ident: {
                lex_.take();
                if (lex_.peek().kind == TokKind::LParen) return call(t);
                auto it = std::find(concepts_.begin(), concepts_.end(), t.text);
                if (it == concepts_.end()) throw UnknownSymbolError(t.text);
                return ExprTree::variable(t.text,
                                          static_cast<int>(it - concepts_.begin()));
            }
            default:
                throw SyntaxError("expected a number, identifier or '(', got '" + t.text + "'",
                                  t.pos);
        }
    }

    ExprTree call(const Token& name) {
        auto code = op_by_symbol(name.text);
        if (!code || !vocab_.contains(*code)) throw UnknownSymbolError(name.text);
        expect(TokKind::LParen, "(");
        std::vector<ExprTree> args;
        args.push_back(expr());
        if (lex_.peek().kind == TokKind::Comma) {
            lex_.take();
            args.push_back(expr());
        }
        expect(TokKind::RParen, ")");
        int arity = op_info(*code).arity;
        if (static_cast<int>(args.size()) != arity)
            throw SyntaxError("'" + name.text + "' expects " + std::to_string(arity) +
                                  " argument(s), got " + std::to_string(args.size()),
                              name.pos);
        if (arity == 1) return ExprTree::unary(*code, std::move(args[0]));
        return ExprTree::binary(*code, std::move(args[0]), std::move(args[1]));
    }

    void require_in_vocab(OpCode code, const Token& tok) {
        if (!vocab_.contains(code)) throw UnknownSymbolError(tok.text);
    }

    void expect(TokKind kind, const char* what) {
        if (lex_.peek().kind != kind)
            throw SyntaxError(std::string("expected '") + what + "', got '" +
                                  lex_.peek().text + "'",
                              lex_.peek().pos);
        lex_.take();
    }

    Lexer lex_;
    const Vocabulary& vocab_;
    const std::vector<std::string>& concepts_;
};

}  // namespace

ExprTree parse_expression(const std::string& text, const Vocabulary& vocab,
                          const std::vector<std::string>& concept_names) {
    return Parser(text, vocab, concept_names).run();
}

// ---------------------------------------------------------------------------
// Formatting

std::string format_number(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    assert(ec == std::errc());
    std::string s(buf, p);
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
        s += ".0";
    return s;
}

namespace {

// Precedence: 1 for +/-, 2 for */÷, 3 for atoms and calls.
int precedence(const ExprTree& t, int idx) {
    const Node& n = t.nodes[idx];
    if (n.kind != NodeKind::Op) return 3;
    switch (n.op) {
        case OpCode::Add:
        case OpCode::Sub: return 1;
        case OpCode::Mul:
        case OpCode::Div: return 2;
        default: return 3;
    }
}

void format_rec(const ExprTree& t, int idx, int parent_prec, bool is_right,
                std::string& out) {
    const Node& n = t.nodes[idx];
    if (n.kind == NodeKind::Var) {
        out += n.name;
        return;
    }
    if (n.kind == NodeKind::Param) {
        out += format_number(n.value);
        return;
    }
    const Operator& op = op_info(n.op);
    if (op.arity == 1) {
        out += op.symbol;
        out += '(';
        format_rec(t, n.child[0], 0, false, out);
        out += ')';
        return;
    }
    int prec = precedence(t, idx);
    bool parens = prec < parent_prec || (prec == parent_prec && is_right);
    if (parens) out += '(';
    format_rec(t, n.child[0], prec, false, out);
    out += (prec == 1) ? (" " + op.symbol + " ") : op.symbol;
    format_rec(t, n.child[1], prec, true, out);
    if (parens) out += ')';
}

}  // namespace

std::string format_expression(const ExprTree& tree) {
    std::string out;
    format_rec(tree, tree.root, 0, false, out);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

// Applies the operator; `strict` raises DomainViolation / NonDifferentiablePoint
// guards, otherwise lets IEEE semantics produce inf/NaN.
double apply_op(OpCode op, double a, double b, bool strict, int node_id) {
    switch (op) {
        case OpCode::Add: return a + b;
        case OpCode::Sub: return a - b;
        case OpCode::Mul: return a * b;
        case OpCode::Div:
            if (strict && b == 0.0) throw DomainViolation("/", node_id, b);
            return a / b;
        case OpCode::Sin: return std::sin(a);
        case OpCode::Cos: return std::cos(a);
        case OpCode::Exp: return std::exp(a);
        case OpCode::Log:
            if (strict && a <= 0.0) throw DomainViolation("log", node_id, a);
            return std::log(a);
        case OpCode::Tan: return std::tan(a);
        case OpCode::Tanh: return std::tanh(a);
        case OpCode::Square: return a * a;
        case OpCode::Cube: return a * a * a;
        case OpCode::Sqrt:
            if (strict && a < 0.0) throw DomainViolation("sqrt", node_id, a);
            return std::sqrt(a);
        case OpCode::Inv:
            if (strict && a == 0.0) throw DomainViolation("inv", node_id, a);
            return 1.0 / a;
    }
    return 0.0;  // unreachable
}

double eval_rec(const ExprTree& t, int idx, const std::map<std::string, double>& concepts) {
    const Node& n = t.nodes[idx];
    switch (n.kind) {
        case NodeKind::Param: return n.value;
        case NodeKind::Var: {
            auto it = concepts.find(n.name);
            if (it == concepts.end()) throw UnboundVariable(n.name);
            return it->second;
        }
        case NodeKind::Op: {
            double a = eval_rec(t, n.child[0], concepts);
            double b = n.n_children == 2 ? eval_rec(t, n.child[1], concepts) : 0.0;
            return apply_op(n.op, a, b, /*strict=*/true, idx);
        }
    }
    return 0.0;
}

double eval_indexed_rec(const ExprTree& t, int idx, const double* values, int n_values,
                        bool strict) {
    const Node& n = t.nodes[idx];
    switch (n.kind) {
        case NodeKind::Param: return n.value;
        case NodeKind::Var:
            if (n.var_index < 0 || n.var_index >= n_values) throw UnboundVariable(n.name);
            return values[n.var_index];
        case NodeKind::Op: {
            double a = eval_indexed_rec(t, n.child[0], values, n_values, strict);
            double b = n.n_children == 2
                           ? eval_indexed_rec(t, n.child[1], values, n_values, strict)
                           : 0.0;
            return apply_op(n.op, a, b, strict, idx);
        }
    }
    return 0.0;
}

}  // namespace

double evaluate(const ExprTree& tree, const std::map<std::string, double>& concepts) {
    return eval_rec(tree, tree.root, concepts);
}

double evaluate_indexed(const ExprTree& tree, const double* values, int n_values,
                        bool strict) {
    return eval_indexed_rec(tree, tree.root, values, n_values, strict);
}

void bind_variables(ExprTree& tree, const std::vector<std::string>& concept_names) {
    for (auto& n : tree.nodes) {
        if (n.kind != NodeKind::Var) continue;
        auto it = std::find(concept_names.begin(), concept_names.end(), n.name);
        if (it == concept_names.end()) throw UnboundVariable(n.name);
        n.var_index = static_cast<int>(it - concept_names.begin());
    }
}

// ---------------------------------------------------------------------------
// Reverse-mode gradients

namespace {

void postorder(const ExprTree& t, int idx, std::vector<int>& order) {
    const Node& n = t.nodes[idx];
    for (int i = 0; i < n.n_children; ++i) postorder(t, n.child[i], order);
    order.push_back(idx);
}

// Local partial derivatives of an operator at (a, b). Throws on points where
// the derivative does not exist when `strict`.
void local_grads(OpCode op, double a, double b, double& da, double& db, bool strict,
                 int node_id) {
    db = 0.0;
    switch (op) {
        case OpCode::Add: da = 1.0; db = 1.0; break;
        case OpCode::Sub: da = 1.0; db = -1.0; break;
        case OpCode::Mul: da = b; db = a; break;
        case OpCode::Div: da = 1.0 / b; db = -a / (b * b); break;
        case OpCode::Sin: da = std::cos(a); break;
        case OpCode::Cos: da = -std::sin(a); break;
        case OpCode::Exp: da = std::exp(a); break;
        case OpCode::Log: da = 1.0 / a; break;
        case OpCode::Tan: {
            double c = std::cos(a);
            da = 1.0 / (c * c);
            break;
        }
        case OpCode::Tanh: {
            double th = std::tanh(a);
            da = 1.0 - th * th;
            break;
        }
        case OpCode::Square: da = 2.0 * a; break;
        case OpCode::Cube: da = 3.0 * a * a; break;
        case OpCode::Sqrt:
            if (strict && a == 0.0) throw NonDifferentiablePoint("sqrt", node_id);
            da = 0.5 / std::sqrt(a);
            break;
        case OpCode::Inv: da = -1.0 / (a * a); break;
    }
}

}  // namespace

EvalWithGradients evaluate_with_gradients(const ExprTree& tree,
                                          const std::map<std::string, double>& concepts) {
    std::vector<int> order;
    postorder(tree, tree.root, order);

    std::vector<double> value(tree.nodes.size(), 0.0);
    for (int idx : order) {
        const Node& n = tree.nodes[idx];
        switch (n.kind) {
            case NodeKind::Param: value[idx] = n.value; break;
            case NodeKind::Var: {
                auto it = concepts.find(n.name);
                if (it == concepts.end()) throw UnboundVariable(n.name);
                value[idx] = it->second;
                break;
            }
            case NodeKind::Op:
                value[idx] = apply_op(n.op, value[n.child[0]],
                                      n.n_children == 2 ? value[n.child[1]] : 0.0,
                                      /*strict=*/true, idx);
                break;
        }
    }

    std::vector<double> adjoint(tree.nodes.size(), 0.0);
    adjoint[tree.root] = 1.0;
    EvalWithGradients out;
    out.value = value[tree.root];
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        int idx = *it;
        const Node& n = tree.nodes[idx];
        switch (n.kind) {
            case NodeKind::Param:
                if (n.trainable) out.param_grads[idx] += adjoint[idx];
                break;
            case NodeKind::Var:
                out.input_grads[n.name] += adjoint[idx];
                break;
            case NodeKind::Op: {
                double da = 0.0, db = 0.0;
                local_grads(n.op, value[n.child[0]],
                            n.n_children == 2 ? value[n.child[1]] : 0.0, da, db,
                            /*strict=*/true, idx);
                adjoint[n.child[0]] += adjoint[idx] * da;
                if (n.n_children == 2) adjoint[n.child[1]] += adjoint[idx] * db;
                break;
            }
        }
    }
    // Make sure every variable appears even with zero gradient.
    for (const auto& n : tree.nodes)
        if (n.kind == NodeKind::Var) out.input_grads.emplace(n.name, 0.0);
    return out;
}

std::vector<int> trainable_parameter_ids(const ExprTree& tree) {
    std::vector<int> ids;
    for (int i = 0; i < tree.size(); ++i)
        if (tree.nodes[i].kind == NodeKind::Param && tree.nodes[i].trainable)
            ids.push_back(i);
    return ids;
}

double eval_param_gradients(const ExprTree& tree, const double* values, int n_values,
                            std::vector<double>& grads) {
    std::vector<int> order;
    postorder(tree, tree.root, order);

    std::vector<double> value(tree.nodes.size(), 0.0);
    bool ok = true;
    for (int idx : order) {
        const Node& n = tree.nodes[idx];
        switch (n.kind) {
            case NodeKind::Param: value[idx] = n.value; break;
            case NodeKind::Var:
                if (n.var_index < 0 || n.var_index >= n_values)
                    throw UnboundVariable(n.name);
                value[idx] = values[n.var_index];
                break;
            case NodeKind::Op:
                value[idx] = apply_op(n.op, value[n.child[0]],
                                      n.n_children == 2 ? value[n.child[1]] : 0.0,
                                      /*strict=*/false, idx);
                break;
        }
        if (!std::isfinite(value[idx])) ok = false;
    }

    std::size_t base = grads.size();
    std::vector<int> param_ids = trainable_parameter_ids(tree);
    grads.resize(base + param_ids.size(), 0.0);
    if (!ok) return std::numeric_limits<double>::quiet_NaN();

    std::vector<double> adjoint(tree.nodes.size(), 0.0);
    adjoint[tree.root] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        int idx = *it;
        const Node& n = tree.nodes[idx];
        if (n.kind != NodeKind::Op) continue;
        double da = 0.0, db = 0.0;
        local_grads(n.op, value[n.child[0]],
                    n.n_children == 2 ? value[n.child[1]] : 0.0, da, db,
                    /*strict=*/false, idx);
        adjoint[n.child[0]] += adjoint[idx] * da;
        if (n.n_children == 2) adjoint[n.child[1]] += adjoint[idx] * db;
    }
    for (std::size_t k = 0; k < param_ids.size(); ++k)
        grads[base + k] = adjoint[param_ids[k]];
    return value[tree.root];
}

// ---------------------------------------------------------------------------
// Complexity metrics

namespace {

struct SubtreeStats {
    int nodes = 0;
    int depth = 0;
    int expr_complexity = 0;
};

SubtreeStats complexity_rec(const ExprTree& t, int idx, std::set<std::string>& vars,
                            int& ops, int& weighted) {
    const Node& n = t.nodes[idx];
    SubtreeStats s;
    if (n.kind == NodeKind::Var) {
        vars.insert(n.name);
        weighted += 1;
    } else if (n.kind == NodeKind::Param) {
        weighted += 1;
    } else {
        ops += 1;
        weighted += op_info(n.op).weight;
    }
    int max_child_depth = 0;
    for (int i = 0; i < n.n_children; ++i) {
        SubtreeStats c = complexity_rec(t, n.child[i], vars, ops, weighted);
        s.nodes += c.nodes;
        s.expr_complexity += c.expr_complexity;
        max_child_depth = std::max(max_child_depth, c.depth);
    }
    s.nodes += 1;
    s.depth = max_child_depth + 1;
    s.expr_complexity += s.nodes;  // this node's subtree size
    return s;
}

}  // namespace

ComplexityProfile& ComplexityProfile::operator+=(const ComplexityProfile& other) {
    node_count += other.node_count;
    depth += other.depth;
    expression_complexity += other.expression_complexity;
    total_vars += other.total_vars;
    total_ops += other.total_ops;
    weighted_node_count += other.weighted_node_count;
    return *this;
}

ComplexityProfile complexity_profile(const ExprTree& tree) {
    std::set<std::string> vars;
    int ops = 0, weighted = 0;
    SubtreeStats s = complexity_rec(tree, tree.root, vars, ops, weighted);
    ComplexityProfile p;
    p.node_count = s.nodes;
    p.depth = s.depth;
    p.expression_complexity = s.expr_complexity;
    p.total_vars = static_cast<int>(vars.size());
    p.total_ops = ops;
    p.weighted_node_count = weighted;
    return p;
}

// ---------------------------------------------------------------------------
// Canonicalization

namespace {

int subtree_count(const ExprTree& t, int idx) {
    const Node& n = t.nodes[idx];
    int c = 1;
    for (int i = 0; i < n.n_children; ++i) c += subtree_count(t, n.child[i]);
    return c;
}

// Value-free structural key: (symbol rank, subtree node count, child keys),
// serialized so lexicographic string comparison matches the tuple order.
// Rank order: {+,-,*,/} < const < variables < transcendental ops, which keeps
// constants in front of the factors they scale ("8.0*sin(theta)") while
// compound terms precede trailing constants ("... + 10.0").
void key_rec(const ExprTree& t, int idx, std::string& out) {
    const Node& n = t.nodes[idx];
    char buf[16];
    if (n.kind == NodeKind::Param) {
        out += "10;";
        return;
    }
    if (n.kind == NodeKind::Var) {
        out += "20:";
        out += n.name;
        out += ';';
        return;
    }
    int rank = static_cast<int>(n.op);
    if (rank >= 4) rank += 30;
    std::snprintf(buf, sizeof(buf), "%02d:%05d(", rank, subtree_count(t, idx));
    out += buf;
    for (int i = 0; i < n.n_children; ++i) key_rec(t, n.child[i], out);
    out += ')';
}

std::string structural_key(const ExprTree& t, int idx) {
    std::string s;
    key_rec(t, idx, s);
    return s;
}

bool all_params(const ExprTree& t, int idx) {
    const Node& n = t.nodes[idx];
    for (int i = 0; i < n.n_children; ++i)
        if (t.nodes[n.child[i]].kind != NodeKind::Param) return false;
    return n.n_children > 0;
}

ExprTree canon_rec(const ExprTree& t, int idx) {
    const Node& n = t.nodes[idx];
    if (n.kind != NodeKind::Op) {
        ExprTree leaf;
        leaf.nodes.push_back(n);
        leaf.root = 0;
        return leaf;
    }
    std::vector<ExprTree> children;
    for (int i = 0; i < n.n_children; ++i) children.push_back(canon_rec(t, n.child[i]));

    ExprTree rebuilt = n.n_children == 1
                           ? ExprTree::unary(n.op, std::move(children[0]))
                           : ExprTree::binary(n.op, std::move(children[0]),
                                              std::move(children[1]));

    // Constant folding: collapse operator nodes whose children are all
    // parameters, unless evaluation hits a guard or a non-finite value.
    if (all_params(rebuilt, rebuilt.root)) {
        bool trainable = false;
        const Node& r = rebuilt.nodes[rebuilt.root];
        for (int i = 0; i < r.n_children; ++i)
            trainable = trainable || rebuilt.nodes[r.child[i]].trainable;
        try {
            double v = evaluate(rebuilt, {});
            if (std::isfinite(v)) return ExprTree::parameter(v, trainable);
        } catch (const DomainViolation&) {
        }
    }

    // Subtracting a constant is an addition in disguise; negation keeps the
    // value bit-identical and exposes the commutative ordering below.
    {
        Node& r = rebuilt.nodes[rebuilt.root];
        if (r.n_children == 2 && r.op == OpCode::Sub &&
            rebuilt.nodes[r.child[1]].kind == NodeKind::Param) {
            r.op = OpCode::Add;
            Node& c = rebuilt.nodes[r.child[1]];
            c.value = -c.value;
        }
    }

    const Node& r = rebuilt.nodes[rebuilt.root];
    if (r.n_children == 2 && (r.op == OpCode::Add || r.op == OpCode::Mul)) {
        if (structural_key(rebuilt, r.child[1]) < structural_key(rebuilt, r.child[0])) {
            Node swapped = r;
            std::swap(swapped.child[0], swapped.child[1]);
            rebuilt.nodes[rebuilt.root] = swapped;
        }
    }
    return rebuilt;
}

}  // namespace

ExprTree canonicalize(const ExprTree& tree) {
    return canon_rec(tree, tree.root);
}

// ---------------------------------------------------------------------------
// Tree edit distance (Zhang-Shasha, ordered trees, unit costs)

namespace {

std::string ted_label(const Node& n) {
    switch (n.kind) {
        case NodeKind::Param: return "const";
        case NodeKind::Var: return "v:" + n.name;
        case NodeKind::Op: return "o:" + op_info(n.op).symbol;
    }
    return {};
}

struct ZsTree {
    std::vector<std::string> label;  // postorder
    std::vector<int> lld;            // leftmost leaf descendant, postorder index
    std::vector<int> keyroots;
};

void zs_build_rec(const ExprTree& t, int idx, ZsTree& out, int& my_post) {
    const Node& n = t.nodes[idx];
    int first_leaf = -1;
    for (int i = 0; i < n.n_children; ++i) {
        int child_post;
        zs_build_rec(t, n.child[i], out, child_post);
        if (i == 0) first_leaf = out.lld[child_post];
    }
    my_post = static_cast<int>(out.label.size());
    out.label.push_back(ted_label(n));
    out.lld.push_back(n.n_children == 0 ? my_post : first_leaf);
}

ZsTree zs_build(const ExprTree& t) {
    ZsTree z;
    int root_post;
    zs_build_rec(t, t.root, z, root_post);
    int n = static_cast<int>(z.label.size());
    std::vector<bool> seen(n, false);
    for (int i = n - 1; i >= 0; --i) {
        if (!seen[z.lld[i]]) {
            z.keyroots.push_back(i);
            seen[z.lld[i]] = true;
        }
    }
    std::sort(z.keyroots.begin(), z.keyroots.end());
    return z;
}

}  // namespace

int tree_edit_distance(const ExprTree& a, const ExprTree& b) {
    ZsTree ta = zs_build(a);
    ZsTree tb = zs_build(b);
    int na = static_cast<int>(ta.label.size());
    int nb = static_cast<int>(tb.label.size());
    std::vector<std::vector<int>> treedist(na, std::vector<int>(nb, 0));
    std::vector<std::vector<int>> fd(na + 2, std::vector<int>(nb + 2, 0));

    for (int ki : ta.keyroots) {
        for (int kj : tb.keyroots) {
            int li = ta.lld[ki], lj = tb.lld[kj];
            fd[li][lj] = 0;
            for (int i = li; i <= ki; ++i) fd[i + 1][lj] = fd[i][lj] + 1;
            for (int j = lj; j <= kj; ++j) fd[li][j + 1] = fd[li][j] + 1;
            for (int i = li; i <= ki; ++i) {
                for (int j = lj; j <= kj; ++j) {
                    if (ta.lld[i] == li && tb.lld[j] == lj) {
                        int rel = ta.label[i] == tb.label[j] ? 0 : 1;
                        fd[i + 1][j + 1] = std::min({fd[i][j + 1] + 1, fd[i + 1][j] + 1,
                                                     fd[i][j] + rel});
                        treedist[i][j] = fd[i + 1][j + 1];
                    } else {
                        fd[i + 1][j + 1] =
                            std::min({fd[i][j + 1] + 1, fd[i + 1][j] + 1,
                                      fd[ta.lld[i]][tb.lld[j]] + treedist[i][j]});
                    }
                }
            }
        }
    }
    return treedist[na - 1][nb - 1];
}

// ---------------------------------------------------------------------------
// Structural comparison

namespace {

bool equal_rec(const ExprTree& a, int ia, const ExprTree& b, int ib, bool exact_params) {
    const Node& na = a.nodes[ia];
    const Node& nb = b.nodes[ib];
    if (na.kind != nb.kind) return false;
    switch (na.kind) {
        case NodeKind::Param:
            return !exact_params || na.value == nb.value;
        case NodeKind::Var:
            return na.name == nb.name;
        case NodeKind::Op:
            if (na.op != nb.op || na.n_children != nb.n_children) return false;
            for (int i = 0; i < na.n_children; ++i)
                if (!equal_rec(a, na.child[i], b, nb.child[i], exact_params)) return false;
            return true;
    }
    return false;
}

}  // namespace

bool structurally_equal(const ExprTree& a, const ExprTree& b) {
    return equal_rec(a, a.root, b, b.root, /*exact_params=*/true);
}

bool structurally_equal_const(const ExprTree& a, const ExprTree& b) {
    return equal_rec(a, a.root, b, b.root, /*exact_params=*/false);
}

}  // namespace mcbe
