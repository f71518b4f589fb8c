#pragma once

// Closed-form expressions used by experiment configs for coefficient fields,
// nonlinearities and initial data.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('+' | '-') unary | primary
//   primary := number | 'pi' | variable | call | '(' expr ')'
//   call    := ('sin' | 'cos' | 'exp' | 'abs') '(' expr ')'
//            | ('min' | 'max') '(' expr ',' expr ')'
//
// Variables are x (space), n (approximation index) and u (solution value);
// each use site declares which of them it admits.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spdelab/error.hpp"

namespace spdelab {

struct ExprVars {
    double x = 0.0;
    double n = 0.0;
    double u = 0.0;
};

enum class ExprVar : std::uint8_t { x, n, u };

class Expression {
public:
    Expression() : code_{Op{OpCode::push, 0.0}}, source_("0") {}

    static Expression parse(std::string_view text, std::initializer_list<ExprVar> allowed) {
        Parser parser(text, allowed);
        Expression e;
        e.source_ = std::string(text);
        e.code_ = parser.run();
        return e;
    }

    static Expression constant(double value) {
        Expression e;
        e.code_ = {Op{OpCode::push, value}};
        e.source_ = std::to_string(value);
        return e;
    }

    double operator()(const ExprVars& v) const {
        double stack[kMaxStack];
        int top = -1;
        for (const Op& op : code_) {
            switch (op.code) {
                case OpCode::push: stack[++top] = op.value; break;
                case OpCode::var_x: stack[++top] = v.x; break;
                case OpCode::var_n: stack[++top] = v.n; break;
                case OpCode::var_u: stack[++top] = v.u; break;
                case OpCode::add: --top; stack[top] += stack[top + 1]; break;
                case OpCode::sub: --top; stack[top] -= stack[top + 1]; break;
                case OpCode::mul: --top; stack[top] *= stack[top + 1]; break;
                case OpCode::div: --top; stack[top] /= stack[top + 1]; break;
                case OpCode::neg: stack[top] = -stack[top]; break;
                case OpCode::sin: stack[top] = std::sin(stack[top]); break;
                case OpCode::cos: stack[top] = std::cos(stack[top]); break;
                case OpCode::exp: stack[top] = std::exp(stack[top]); break;
                case OpCode::abs: stack[top] = std::fabs(stack[top]); break;
                case OpCode::min: --top; stack[top] = std::fmin(stack[top], stack[top + 1]); break;
                case OpCode::max: --top; stack[top] = std::fmax(stack[top], stack[top + 1]); break;
            }
        }
        return stack[0];
    }

    double operator()(double x, double n = 0.0, double u = 0.0) const {
        return (*this)(ExprVars{x, n, u});
    }

    const std::string& source() const noexcept { return source_; }

    bool uses(ExprVar var) const noexcept {
        const OpCode want = var == ExprVar::x ? OpCode::var_x
                          : var == ExprVar::n ? OpCode::var_n
                                              : OpCode::var_u;
        for (const Op& op : code_) {
            if (op.code == want) return true;
        }
        return false;
    }

private:
    static constexpr int kMaxStack = 64;

    enum class OpCode : std::uint8_t {
        push, var_x, var_n, var_u, add, sub, mul, div, neg, sin, cos, exp, abs, min, max
    };

    struct Op {
        OpCode code;
        double value = 0.0;
    };

    class Parser {
    public:
        Parser(std::string_view text, std::initializer_list<ExprVar> allowed)
            : text_(text), allowed_(allowed) {}

        std::vector<Op> run() {
            skip_ws();
            if (pos_ == text_.size()) throw ExpressionError("empty expression", pos_);
            expr();
            skip_ws();
            if (pos_ != text_.size()) {
                throw ExpressionError("unexpected '" + std::string(1, text_[pos_]) + "'", pos_);
            }
            if (max_depth_ > kMaxStack) throw ExpressionError("expression nested too deeply", 0);
            return std::move(out_);
        }

    private:
        void emit(OpCode c, double v = 0.0, int stack_delta = 0) {
            out_.push_back(Op{c, v});
            depth_ += stack_delta;
            if (depth_ > max_depth_) max_depth_ = depth_;
        }

        void skip_ws() {
            while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        }

        bool accept(char c) {
            skip_ws();
            if (pos_ < text_.size() && text_[pos_] == c) {
                ++pos_;
                return true;
            }
            return false;
        }

        void expect(char c) {
            if (!accept(c)) {
                throw ExpressionError(std::string("expected '") + c + "'", pos_);
            }
        }

        void expr() {
            term();
            for (;;) {
                if (accept('+')) { term(); emit(OpCode::add, 0.0, -1); }
                else if (accept('-')) { term(); emit(OpCode::sub, 0.0, -1); }
                else return;
            }
        }

        void term() {
            unary();
            for (;;) {
                if (accept('*')) { unary(); emit(OpCode::mul, 0.0, -1); }
                else if (accept('/')) { unary(); emit(OpCode::div, 0.0, -1); }
                else return;
            }
        }

        void unary() {
            if (accept('-')) { unary(); emit(OpCode::neg); return; }
            if (accept('+')) { unary(); return; }
            primary();
        }

        void primary() {
            skip_ws();
            if (pos_ >= text_.size()) throw ExpressionError("unexpected end of expression", pos_);
            const char c = text_[pos_];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                number();
                return;
            }
            if (std::isalpha(static_cast<unsigned char>(c))) {
                const std::size_t start = pos_;
                while (pos_ < text_.size() &&
                       (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
                    ++pos_;
                }
                identifier(text_.substr(start, pos_ - start), start);
                return;
            }
            if (accept('(')) {
                expr();
                expect(')');
                return;
            }
            throw ExpressionError("unexpected '" + std::string(1, c) + "'", pos_);
        }

        void number() {
            const std::size_t start = pos_;
            while (pos_ < text_.size() &&
                   (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) {
                ++pos_;
            }
            if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
                std::size_t p = pos_ + 1;
                if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
                if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
                    pos_ = p;
                    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
                }
            }
            const std::string lit(text_.substr(start, pos_ - start));
            std::size_t used = 0;
            double value = 0.0;
            try {
                value = std::stod(lit, &used);
            } catch (const std::exception&) {
                throw ExpressionError("malformed number '" + lit + "'", start);
            }
            if (used != lit.size()) throw ExpressionError("malformed number '" + lit + "'", start);
            emit(OpCode::push, value, +1);
        }

        bool admits(ExprVar v) const {
            for (ExprVar a : allowed_) {
                if (a == v) return true;
            }
            return false;
        }

        void identifier(std::string_view name, std::size_t at) {
            if (name == "pi") { emit(OpCode::push, std::numbers::pi, +1); return; }
            const std::pair<std::string_view, ExprVar> vars[] = {
                {"x", ExprVar::x}, {"n", ExprVar::n}, {"u", ExprVar::u}};
            for (const auto& [vname, v] : vars) {
                if (name == vname) {
                    if (!admits(v)) {
                        throw ExpressionError("variable '" + std::string(name) + "' not allowed here", at);
                    }
                    emit(v == ExprVar::x ? OpCode::var_x : v == ExprVar::n ? OpCode::var_n : OpCode::var_u,
                         0.0, +1);
                    return;
                }
            }
            const std::pair<std::string_view, OpCode> unary_fns[] = {
                {"sin", OpCode::sin}, {"cos", OpCode::cos}, {"exp", OpCode::exp}, {"abs", OpCode::abs}};
            for (const auto& [fname, code] : unary_fns) {
                if (name == fname) {
                    expect('(');
                    expr();
                    expect(')');
                    emit(code);
                    return;
                }
            }
            if (name == "min" || name == "max") {
                expect('(');
                expr();
                expect(',');
                expr();
                expect(')');
                emit(name == "min" ? OpCode::min : OpCode::max, 0.0, -1);
                return;
            }
            throw ExpressionError("unknown identifier '" + std::string(name) + "'", at);
        }

        std::string_view text_;
        std::vector<ExprVar> allowed_;
        std::vector<Op> out_;
        std::size_t pos_ = 0;
        int depth_ = 0;
        int max_depth_ = 0;
    };

    std::vector<Op> code_;
    std::string source_;
};

}  // namespace spdelab
