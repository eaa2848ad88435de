"""Expression language: parser, evaluator, symbolic differentiation, predicates.

Grammar (precedence low to high):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?            # right-associative, binds above '-'
    atom    := number | 'pi' | 'e' | variable | call | '(' expr ')'
    call    := name '(' expr (',' expr)* ')'

Variables are ``t``, ``x1`` .. ``xn`` plus whatever extra scalars the caller
declares (``v`` for comparison functions, ``r`` for margin predicates).
Functions: sin cos tan exp log sqrt abs sgn (unary), pow min max (binary).
``sgn`` differentiates to 0 and ``abs`` to ``sgn`` away from their kink at 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArityError, EvalDomainError, ExprSyntaxError, UnknownIdentifier

_UNARY_FUNCS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "sgn")
_BINARY_FUNCS = ("pow", "min", "max")
_CONSTANTS = {"pi": math.pi, "e": math.e}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    name: str          # "t", "v", "r", or "x"
    index: int = 0     # 1-based for "x"


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str            # + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Expr = Num | Const | Var | Neg | Bin | Call


# ---------------------------------------------------------------- tokenizer

@dataclass(frozen=True)
class _Token:
    kind: str      # num ident op lparen rparen comma cmp end
    text: str
    offset: int


def _tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            tokens.append(_Token("num", text[i:j], i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("ident", text[i:j], i))
            i = j
            continue
        if c in "+-*/^":
            tokens.append(_Token("op", c, i))
            i += 1
            continue
        if c == "(":
            tokens.append(_Token("lparen", c, i))
            i += 1
            continue
        if c == ")":
            tokens.append(_Token("rparen", c, i))
            i += 1
            continue
        if c == ",":
            tokens.append(_Token("comma", c, i))
            i += 1
            continue
        if c in "<>!=":
            j = i + 1
            if j < n and text[j] == "=":
                j += 1
            tokens.append(_Token("cmp", text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", i)
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens, n_vars, extra):
        self.tokens = tokens
        self.pos = 0
        self.n_vars = n_vars
        self.extra = set(extra)

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind, what):
        tok = self.advance()
        if tok.kind != kind:
            raise ExprSyntaxError(f"expected {what}, got {tok.text!r}", tok.offset)
        return tok

    def parse_expr(self):
        node = self.parse_term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            node = Bin(op, node, self.parse_term())
        return node

    def parse_term(self):
        node = self.parse_unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            node = Bin(op, node, self.parse_unary())
        return node

    def parse_unary(self):
        if self.peek().kind == "op" and self.peek().text == "-":
            self.advance()
            return Neg(self.parse_unary())
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.advance()
            # Right-associative; the exponent may carry a unary minus.
            return Bin("^", base, self.parse_unary())
        return base

    def parse_atom(self):
        tok = self.advance()
        if tok.kind == "num":
            try:
                return Num(float(tok.text))
            except ValueError:
                raise ExprSyntaxError(f"bad number {tok.text!r}", tok.offset) from None
        if tok.kind == "lparen":
            node = self.parse_expr()
            self.expect("rparen", "')'")
            return node
        if tok.kind == "ident":
            name = tok.text
            if self.peek().kind == "lparen":
                return self.parse_call(name, tok.offset)
            if name in _CONSTANTS:
                return Const(name)
            return self.parse_var(name, tok.offset)
        raise ExprSyntaxError(f"unexpected token {tok.text!r}", tok.offset)

    def parse_call(self, name, offset):
        if name not in _UNARY_FUNCS and name not in _BINARY_FUNCS:
            raise UnknownIdentifier(name, offset)
        self.expect("lparen", "'('")
        args = [self.parse_expr()]
        while self.peek().kind == "comma":
            self.advance()
            args.append(self.parse_expr())
        self.expect("rparen", "')'")
        want = 1 if name in _UNARY_FUNCS else 2
        if len(args) != want:
            raise ArityError(f"{name} takes {want} argument(s), got {len(args)}")
        return Call(name, tuple(args))

    def parse_var(self, name, offset):
        if name == "t" or name in self.extra:
            return Var(name)
        if name.startswith("x") and name[1:].isdigit():
            idx = int(name[1:])
            if 1 <= idx <= self.n_vars:
                return Var("x", idx)
            raise UnknownIdentifier(name, offset)
        raise UnknownIdentifier(name, offset)


def parse_expr(text: str, n: int, extra=()) -> Expr:
    """Parse an expression over t, x1..xn and the extra scalar names."""
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    parser = _Parser(_tokenize(text), n, extra)
    node = parser.parse_expr()
    tok = parser.peek()
    if tok.kind != "end":
        raise ExprSyntaxError(f"trailing input {tok.text!r}", tok.offset)
    return node


# ---------------------------------------------------------------- printing

def _paren(child: Expr, parent_level: int, text: str) -> str:
    if _level(child) < parent_level:
        return f"({text})"
    return text


def _level(e: Expr) -> int:
    if isinstance(e, Bin):
        return {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}[e.op]
    if isinstance(e, Neg):
        return 3
    return 5


def to_text(e: Expr) -> str:
    """Render with minimal parentheses; parse(to_text(e)) reproduces e."""
    if isinstance(e, Num):
        if e.value == int(e.value) and abs(e.value) < 1e16:
            return str(int(e.value))
        return repr(e.value)
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Var):
        return f"x{e.index}" if e.name == "x" else e.name
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        if _level(e.arg) <= 1:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Bin):
        lt, rt = to_text(e.left), to_text(e.right)
        if e.op in "+-":
            if _level(e.left) < 1:
                lt = f"({lt})"
            if _level(e.right) <= 1:
                rt = f"({rt})" if (e.op == "-" or isinstance(e.right, Neg)
                                   or (isinstance(e.right, Bin) and e.right.op in "+-")) else rt
            return f"{lt}{e.op}{rt}"
        if e.op in "*/":
            lt = _paren(e.left, 2, lt)
            if _level(e.right) <= 2:
                rt = f"({rt})"
            return f"{lt}{e.op}{rt}"
        lt = f"({lt})" if _level(e.left) <= 4 else lt
        rt = f"({rt})" if _level(e.right) < 3 else rt
        return f"{lt}^{rt}"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(to_text(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------- evaluation

def evaluate(e: Expr, t: float = 0.0, x=(), **extra) -> float:
    """IEEE-754 evaluation. Domain violations raise EvalDomainError; overflow
    maps to the +/- inf sentinel for the caller to handle."""
    env = {"t": float(t)}
    env.update({k: float(v) for k, v in extra.items()})
    return _eval(e, env, np.asarray(x, dtype=float))


def _eval(e: Expr, env, x) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Const):
        return _CONSTANTS[e.name]
    if isinstance(e, Var):
        if e.name == "x":
            if e.index > len(x):
                raise EvalDomainError(f"state has no component x{e.index}")
            return float(x[e.index - 1])
        if e.name not in env:
            raise EvalDomainError(f"no value bound for '{e.name}'")
        return env[e.name]
    if isinstance(e, Neg):
        return -_eval(e.arg, env, x)
    if isinstance(e, Bin):
        a = _eval(e.left, env, x)
        b = _eval(e.right, env, x)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0.0:
                raise EvalDomainError("division by zero")
            return a / b
        return _power(a, b)
    if isinstance(e, Call):
        vals = [_eval(a, env, x) for a in e.args]
        return _call(e.fn, vals)
    raise TypeError(f"not an expression node: {e!r}")


def _power(a: float, b: float) -> float:
    if a < 0.0 and b != int(b):
        raise EvalDomainError(f"negative base {a!r} with non-integer exponent")
    if a == 0.0 and b < 0.0:
        raise EvalDomainError("zero base with negative exponent")
    try:
        return math.pow(a, b)
    except OverflowError:
        return math.inf if (a > 1.0 or b > 0.0) else 0.0
    except ValueError as exc:
        raise EvalDomainError(str(exc)) from None


def _call(fn: str, vals) -> float:
    a = vals[0]
    try:
        if fn == "sin":
            return math.sin(a)
        if fn == "cos":
            return math.cos(a)
        if fn == "tan":
            return math.tan(a)
        if fn == "exp":
            try:
                return math.exp(a)
            except OverflowError:
                return math.inf
        if fn == "log":
            if a <= 0.0:
                raise EvalDomainError(f"log of nonpositive value {a!r}")
            return math.log(a)
        if fn == "sqrt":
            if a < 0.0:
                raise EvalDomainError(f"sqrt of negative value {a!r}")
            return math.sqrt(a)
        if fn == "abs":
            return abs(a)
        if fn == "sgn":
            return float(np.sign(a))
        if fn == "pow":
            return _power(a, vals[1])
        if fn == "min":
            return min(a, vals[1])
        if fn == "max":
            return max(a, vals[1])
    except OverflowError:
        return math.inf
    raise EvalDomainError(f"unknown function {fn}")


# ---------------------------------------------------------------- folding

def _num(e: Expr):
    return e.value if isinstance(e, Num) else None


def _mk_add(a, b):
    if _num(a) == 0.0:
        return b
    if _num(b) == 0.0:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Bin("+", a, b)


def _mk_sub(a, b):
    if _num(b) == 0.0:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _num(a) == 0.0:
        return _mk_neg(b)
    return Bin("-", a, b)


def _mk_neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mk_mul(a, b):
    if _num(a) == 0.0 or _num(b) == 0.0:
        return Num(0.0)
    if _num(a) == 1.0:
        return b
    if _num(b) == 1.0:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if isinstance(b, Num):
        a, b = b, a
    if isinstance(a, Num) and isinstance(b, Bin) and b.op == "*" \
            and isinstance(b.left, Num):
        return Bin("*", Num(a.value * b.left.value), b.right)
    return Bin("*", a, b)


def _mk_div(a, b):
    if _num(a) == 0.0:
        return Num(0.0)
    if _num(b) == 1.0:
        return a
    return Bin("/", a, b)


def _mk_pow(a, b):
    if _num(b) == 1.0:
        return a
    if _num(b) == 0.0:
        return Num(1.0)
    return Bin("^", a, b)


# ---------------------------------------------------------------- derivative

def differentiate(e: Expr, var: Var | str, index: int = 0) -> Expr:
    """Symbolic derivative with light constant folding.

    var may be a Var node, "t", an extra name, or "x" with a 1-based index.
    sgn differentiates to 0 and abs to sgn (kink convention at 0).
    """
    if isinstance(var, str):
        var = Var(var, index)
    return _diff(e, var)


def _is_var(e: Expr, var: Var) -> bool:
    return isinstance(e, Var) and e.name == var.name and e.index == var.index


def _diff(e: Expr, var: Var) -> Expr:
    if isinstance(e, (Num, Const)):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0) if _is_var(e, var) else Num(0.0)
    if isinstance(e, Neg):
        return _mk_neg(_diff(e.arg, var))
    if isinstance(e, Bin):
        da = _diff(e.left, var)
        db = _diff(e.right, var)
        a, b = e.left, e.right
        if e.op == "+":
            return _mk_add(da, db)
        if e.op == "-":
            return _mk_sub(da, db)
        if e.op == "*":
            return _mk_add(_mk_mul(da, b), _mk_mul(a, db))
        if e.op == "/":
            num = _mk_sub(_mk_mul(da, b), _mk_mul(a, db))
            return _mk_div(num, _mk_pow(b, Num(2.0)))
        # power rule; general form only when the exponent involves variables
        if _num(db) == 0.0 and not _contains_vars(b):
            return _mk_mul(_mk_mul(b, _mk_pow(a, _const_minus_one(b))), da)
        ln_a = Call("log", (a,))
        inner = _mk_add(_mk_mul(db, ln_a), _mk_div(_mk_mul(b, da), a))
        return _mk_mul(_mk_pow(a, b), inner)
    if isinstance(e, Call):
        return _diff_call(e, var)
    raise TypeError(f"not an expression node: {e!r}")


def _const_minus_one(b: Expr) -> Expr:
    if isinstance(b, Num):
        return Num(b.value - 1.0)
    return _mk_sub(b, Num(1.0))


def _contains_vars(e: Expr) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, (Num, Const)):
        return False
    if isinstance(e, Neg):
        return _contains_vars(e.arg)
    if isinstance(e, Bin):
        return _contains_vars(e.left) or _contains_vars(e.right)
    if isinstance(e, Call):
        return any(_contains_vars(a) for a in e.args)
    return False


def _diff_call(e: Call, var: Var) -> Expr:
    a = e.args[0]
    da = _diff(a, var)
    if e.fn == "sin":
        return _mk_mul(Call("cos", (a,)), da)
    if e.fn == "cos":
        return _mk_neg(_mk_mul(Call("sin", (a,)), da))
    if e.fn == "tan":
        sec2 = _mk_add(Num(1.0), _mk_pow(Call("tan", (a,)), Num(2.0)))
        return _mk_mul(sec2, da)
    if e.fn == "exp":
        return _mk_mul(Call("exp", (a,)), da)
    if e.fn == "log":
        return _mk_div(da, a)
    if e.fn == "sqrt":
        return _mk_div(da, _mk_mul(Num(2.0), Call("sqrt", (a,))))
    if e.fn == "abs":
        return _mk_mul(Call("sgn", (a,)), da)
    if e.fn == "sgn":
        return Num(0.0)
    if e.fn == "pow":
        return _diff(Bin("^", e.args[0], e.args[1]), var)
    if e.fn in ("min", "max"):
        # min(a,b) = (a+b-|a-b|)/2, max mirrors it; reduces to the abs rule.
        b = e.args[1]
        s = _mk_add(e.args[0], b)
        d = Call("abs", (_mk_sub(e.args[0], b),))
        comb = _mk_sub(s, d) if e.fn == "min" else _mk_add(s, d)
        return _diff(_mk_div(comb, Num(2.0)), var)
    raise EvalDomainError(f"cannot differentiate call to {e.fn}")


def jacobian(fs, n: int):
    """Componentwise symbolic Jacobian of a list of expressions: m x n nodes."""
    return [[differentiate(f, "x", j + 1) for j in range(n)] for f in fs]


# ------------------------------------------------------- vectorized closures

def compile_fn(e: Expr, n: int, extra=()):
    """Compile to a numpy closure fn(t, X, **extra) with X of shape (k, n).

    Domain violations produce nan entries instead of raising (callers filter).
    """
    names = {}

    def emit(node) -> str:
        if isinstance(node, Num):
            return repr(node.value)
        if isinstance(node, Const):
            return repr(_CONSTANTS[node.name])
        if isinstance(node, Var):
            if node.name == "x":
                return f"X[:, {node.index - 1}]"
            return f"_env[{node.name!r}]"
        if isinstance(node, Neg):
            return f"(-{emit(node.arg)})"
        if isinstance(node, Bin):
            a, b = emit(node.left), emit(node.right)
            if node.op == "^":
                return f"_pow({a}, {b})"
            if node.op == "/":
                return f"_div({a}, {b})"
            return f"({a} {node.op} {b})"
        if isinstance(node, Call):
            args = ", ".join(emit(a) for a in node.args)
            return f"_f[{node.fn!r}]({args})"
        raise TypeError(f"not an expression node: {node!r}")

    body = emit(e)

    def _pow(a, b):
        with np.errstate(all="ignore"):
            out = np.float_power(np.asarray(a, dtype=float), b)
        return out

    def _div(a, b):
        with np.errstate(all="ignore"):
            return np.where(b == 0, np.nan, a / np.where(b == 0, 1.0, b))

    def _log(a):
        with np.errstate(all="ignore"):
            return np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), np.nan)

    def _sqrt(a):
        with np.errstate(all="ignore"):
            return np.where(a >= 0, np.sqrt(np.abs(a)), np.nan)

    funcs = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
             "log": _log, "sqrt": _sqrt, "abs": np.abs, "sgn": np.sign,
             "pow": _pow, "min": np.minimum, "max": np.maximum}
    code = compile(body, "<expr>", "eval")

    def fn(t, X, **extra_values):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        env = {"t": np.asarray(t, dtype=float)}
        env.update({k: np.asarray(v, dtype=float) for k, v in extra_values.items()})
        with np.errstate(all="ignore"):
            out = eval(code, {"X": X, "_env": env, "_f": funcs,
                              "_pow": _pow, "_div": _div, "np": np})
        return np.broadcast_to(np.asarray(out, dtype=float),
                               (X.shape[0],)).copy()

    fn.source = body
    return fn


# ---------------------------------------------------------------- predicates

_CMP_OPS = ("<", "<=", ">", ">=", "!=", "==")


@dataclass(frozen=True)
class Predicate:
    """Comparison of two expressions; region descriptions are conjunctions."""

    left: Expr
    op: str
    right: Expr
    text: str = ""

    def holds(self, t: float, x, **extra) -> bool:
        a = evaluate(self.left, t, x, **extra)
        b = evaluate(self.right, t, x, **extra)
        return _compare(self.op, a, b)

    def holds_many(self, t, X, n: int, **extra) -> np.ndarray:
        fa = compile_fn(self.left, n)
        fb = compile_fn(self.right, n)
        a = fa(t, X, **extra)
        b = fb(t, X, **extra)
        with np.errstate(invalid="ignore"):
            res = _compare_arr(self.op, a, b)
        return res & np.isfinite(a) & np.isfinite(b)


def _compare(op, a, b):
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op == "!=":
        return a != b
    return a == b


_compare_arr = _compare


def parse_predicate(text: str, n: int, extra=()) -> Predicate:
    """Parse "expr OP expr" with OP one of < <= > >= != ==."""
    tokens = _tokenize(text)
    split = None
    for i, tok in enumerate(tokens):
        if tok.kind == "cmp":
            if split is not None:
                raise ExprSyntaxError("more than one comparison", tok.offset)
            split = i
    if split is None:
        raise ExprSyntaxError("predicate needs a comparison operator", 0)
    op = tokens[split].text
    if op not in _CMP_OPS:
        raise ExprSyntaxError(f"unsupported comparison {op!r}", tokens[split].offset)
    lhs = tokens[:split] + [_Token("end", "", tokens[split].offset)]
    rhs = tokens[split + 1:]
    pl = _Parser(lhs, n, extra)
    left = pl.parse_expr()
    if pl.peek().kind != "end":
        raise ExprSyntaxError("trailing input before comparison", pl.peek().offset)
    pr = _Parser(rhs, n, extra)
    right = pr.parse_expr()
    if pr.peek().kind != "end":
        raise ExprSyntaxError("trailing input after comparison", pr.peek().offset)
    return Predicate(left=left, op=op, right=right, text=text)
