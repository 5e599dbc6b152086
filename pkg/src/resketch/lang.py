"""CardLang: a tiny indentation-structured statement language.

Programs are single functions over integers, booleans and integer lists::

    def count_above ( xs ) :
        result = 0
        for x in xs :
            if x > 7 :
                result = result + 1
        return result

The lexer normalizes newlines/indentation into explicit ``<ind>``/``<ded>``
tokens so downstream consumers (LCS, n-gram metrics, the editor) operate on
flat token sequences.  Binary operators ``+ - *`` share one precedence level
and associate left, matching the grammar; ``+`` additionally appends an
integer to a list and concatenates two lists.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .errors import (
    ArityError,
    EvalTypeError,
    FuelExhausted,
    LexError,
    MissingReturn,
    ParseError,
    UndefinedVariable,
)

INDENT = "<ind>"
DEDENT = "<ded>"

KEYWORDS = frozenset({"def", "for", "in", "if", "return", "and", "len"})
REL_OPS = ("<", "<=", "==", ">=", ">", "!=")
ARITH_OPS = ("+", "-", "*")
TWO_CHAR_OPS = ("<=", ">=", "==", "!=")
ONE_CHAR_TOKENS = frozenset("()[]:,=+-*<>")
PUNCT_TOKENS = frozenset(TWO_CHAR_OPS) | ONE_CHAR_TOKENS

_IDENT_START = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CONT = _IDENT_START | frozenset("0123456789")
_DIGITS = frozenset("0123456789")


def is_int_token(tok: str) -> bool:
    return bool(tok) and all(c in _DIGITS for c in tok)


def is_ident_token(tok: str) -> bool:
    if not tok or tok in KEYWORDS or tok in (INDENT, DEDENT):
        return False
    if tok[0] not in _IDENT_START:
        return False
    return all(c in _IDENT_CONT for c in tok)


def token_class(tok: str) -> str:
    """One of: keyword, ident, int, punct, block."""
    if tok in (INDENT, DEDENT):
        return "block"
    if tok in KEYWORDS:
        return "keyword"
    if tok in PUNCT_TOKENS:
        return "punct"
    if is_int_token(tok):
        return "int"
    if is_ident_token(tok):
        return "ident"
    raise LexError(f"not a CardLang token: {tok!r}")


# -- lexer -------------------------------------------------------------------

def tokenize_code(text: str) -> list[str]:
    """Lex CardLang source into tokens with explicit block delimiters."""
    tokens: list[str] = []
    stack = [0]
    for line_no, raw in enumerate(text.split("\n"), start=1):
        if "\t" in raw:
            raise LexError("tab characters are not allowed", line=line_no)
        line = raw.rstrip()
        if not line.strip():
            continue
        width = len(line) - len(line.lstrip(" "))
        if width > stack[-1]:
            stack.append(width)
            tokens.append(INDENT)
        else:
            while width < stack[-1]:
                stack.pop()
                tokens.append(DEDENT)
            if width != stack[-1]:
                raise LexError("inconsistent dedent", line=line_no)
        tokens.extend(_lex_line(line.lstrip(" "), line_no))
    while stack[-1] > 0:
        stack.pop()
        tokens.append(DEDENT)
    return tokens


def _lex_line(line: str, line_no: int) -> list[str]:
    out = []
    i = 0
    n = len(line)
    while i < n:
        c = line[i]
        if c == " ":
            i += 1
            continue
        if c in _DIGITS:
            j = i + 1
            while j < n and line[j] in _DIGITS:
                j += 1
            out.append(line[i:j])
            i = j
            continue
        if c in _IDENT_START:
            j = i + 1
            while j < n and line[j] in _IDENT_CONT:
                j += 1
            out.append(line[i:j])
            i = j
            continue
        if line[i:i + 2] in TWO_CHAR_OPS:
            out.append(line[i:i + 2])
            i += 2
            continue
        if c in ONE_CHAR_TOKENS:
            out.append(c)
            i += 1
            continue
        raise LexError(f"character {c!r} outside the CardLang alphabet",
                       line=line_no, col=i)
    return out


_STMT_KEYWORDS = frozenset({"for", "if", "return"})


def detokenize(tokens: list[str]) -> str:
    """Render a token sequence back to indented source text.

    For well-formed programs this is the inverse of :func:`tokenize_code` up
    to whitespace; for arbitrary token streams it is a best-effort layout
    (levels clamp at zero).
    """
    lines: list[str] = []
    cur: list[str] = []
    level = 0

    def flush():
        if cur:
            lines.append("    " * level + " ".join(cur))
            cur.clear()

    for idx, tok in enumerate(tokens):
        if tok == INDENT:
            flush()
            level += 1
            continue
        if tok == DEDENT:
            flush()
            level = max(0, level - 1)
            continue
        starts_stmt = tok in _STMT_KEYWORDS or (
            is_ident_token(tok)
            and idx + 1 < len(tokens)
            and tokens[idx + 1] == "="
        )
        if cur and starts_stmt:
            flush()
        cur.append(tok)
    flush()
    return "\n".join(lines) + ("\n" if lines else "")


# -- abstract syntax tree -----------------------------------------------------

@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Literal:
    value: Union[int, tuple]  # tuple() is the empty-list literal


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


@dataclass(frozen=True)
class Assign:
    target: str
    expr: "Expr"


@dataclass(frozen=True)
class For:
    var: str
    iterable: "Expr"
    body: tuple


@dataclass(frozen=True)
class If:
    cond: "Expr"
    body: tuple


@dataclass(frozen=True)
class Return:
    expr: "Expr"


@dataclass(frozen=True)
class Program:
    name: str
    params: tuple
    body: tuple


Expr = Union[Name, Literal, BinOp, Call]
Stmt = Union[Assign, For, If, Return]


# -- parser --------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[str]):
        self.toks = tokens
        self.pos = 0

    def peek(self, ahead: int = 0):
        i = self.pos + ahead
        return self.toks[i] if i < len(self.toks) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", token_index=self.pos)
        self.pos += 1
        return tok

    def expect(self, tok: str):
        got = self.peek()
        if got != tok:
            raise ParseError(f"expected {tok!r}, got {got!r}",
                             token_index=self.pos)
        self.pos += 1

    def ident(self) -> str:
        got = self.peek()
        if got is None or not is_ident_token(got):
            raise ParseError(f"expected identifier, got {got!r}",
                             token_index=self.pos)
        self.pos += 1
        return got

    def program(self) -> Program:
        self.expect("def")
        name = self.ident()
        self.expect("(")
        params = []
        if self.peek() != ")":
            params.append(self.ident())
            while self.peek() == ",":
                self.next()
                params.append(self.ident())
        if len(set(params)) != len(params):
            raise ParseError("duplicate parameter name", token_index=self.pos)
        self.expect(")")
        self.expect(":")
        body = self.block()
        if self.pos != len(self.toks):
            raise ParseError("trailing tokens after program",
                             token_index=self.pos)
        return Program(name=name, params=tuple(params), body=body)

    def block(self) -> tuple:
        self.expect(INDENT)
        stmts = [self.stmt()]
        while self.peek() != DEDENT:
            stmts.append(self.stmt())
        self.expect(DEDENT)
        return tuple(stmts)

    def stmt(self) -> Stmt:
        tok = self.peek()
        if tok == "for":
            self.next()
            var = self.ident()
            self.expect("in")
            it = self.expr()
            self.expect(":")
            return For(var=var, iterable=it, body=self.block())
        if tok == "if":
            self.next()
            cond = self.cond()
            self.expect(":")
            return If(cond=cond, body=self.block())
        if tok == "return":
            self.next()
            return Return(expr=self.expr())
        if tok is not None and is_ident_token(tok):
            target = self.ident()
            self.expect("=")
            return Assign(target=target, expr=self.expr())
        raise ParseError(f"expected statement, got {tok!r}",
                         token_index=self.pos)

    def cond(self) -> Expr:
        node = self.rel()
        while self.peek() == "and":
            self.next()
            node = BinOp(op="and", left=node, right=self.rel())
        return node

    def rel(self) -> Expr:
        left = self.expr()
        op = self.peek()
        if op not in REL_OPS:
            raise ParseError(f"expected comparison, got {op!r}",
                             token_index=self.pos)
        self.next()
        return BinOp(op=op, left=left, right=self.expr())

    def expr(self) -> Expr:
        node = self.term()
        while self.peek() in ARITH_OPS:
            op = self.next()
            node = BinOp(op=op, left=node, right=self.term())
        return node

    def term(self) -> Expr:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of expression",
                             token_index=self.pos)
        if is_int_token(tok):
            self.next()
            return Literal(value=int(tok))
        if tok == "[":
            self.next()
            self.expect("]")
            return Literal(value=())
        if tok == "len":
            self.next()
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Call(fn="len", args=(arg,))
        if is_ident_token(tok):
            self.next()
            return Name(ident=tok)
        raise ParseError(f"expected term, got {tok!r}", token_index=self.pos)


def parse_program(tokens: list[str]) -> Program:
    """Parse a token sequence into a Program, rejecting undefined names.

    The name check is syntactic: an identifier must be a parameter, a loop
    variable, or the target of a textually earlier assignment.
    """
    prog = _Parser(tokens).program()
    _check_names(prog)
    return prog


def _check_names(prog: Program) -> None:
    defined = set(prog.params)

    def walk_expr(e: Expr):
        if isinstance(e, Name):
            if e.ident not in defined:
                raise ParseError(f"identifier {e.ident!r} used before assignment")
        elif isinstance(e, BinOp):
            walk_expr(e.left)
            walk_expr(e.right)
        elif isinstance(e, Call):
            for a in e.args:
                walk_expr(a)

    def walk_body(body):
        for st in body:
            if isinstance(st, Assign):
                walk_expr(st.expr)
                defined.add(st.target)
            elif isinstance(st, For):
                walk_expr(st.iterable)
                defined.add(st.var)
                walk_body(st.body)
            elif isinstance(st, If):
                walk_expr(st.cond)
                walk_body(st.body)
            elif isinstance(st, Return):
                walk_expr(st.expr)

    walk_body(prog.body)


def parse_text(text: str) -> Program:
    return parse_program(tokenize_code(text))


# -- values and interpreter ----------------------------------------------------

def is_value(v) -> bool:
    if type(v) is bool or type(v) is int:
        return True
    return type(v) is list and all(type(x) is int for x in v)


def values_equal(a, b) -> bool:
    if type(a) is not type(b):
        return False
    return a == b


class _ReturnSignal(Exception):
    def __init__(self, value):
        self.value = value


class _Fuel:
    __slots__ = ("left",)

    def __init__(self, amount: int):
        self.left = amount

    def spend(self):
        if self.left <= 0:
            raise FuelExhausted("statement budget exhausted")
        self.left -= 1


def run_program(prog: Program, args: list, fuel: int = 100_000):
    """Interpret ``prog`` on ``args`` with a per-run statement budget."""
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    if len(args) != len(prog.params):
        raise ArityError(
            f"{prog.name} takes {len(prog.params)} argument(s), got {len(args)}")
    for a in args:
        if not is_value(a):
            raise EvalTypeError(f"argument {a!r} is not a CardLang value")
    env = dict(zip(prog.params, args))
    gas = _Fuel(fuel)
    try:
        _exec_body(prog.body, env, gas)
    except _ReturnSignal as sig:
        return sig.value
    raise MissingReturn(f"{prog.name} finished without returning")


def _exec_body(body, env, gas):
    for st in body:
        gas.spend()
        if isinstance(st, Assign):
            env[st.target] = _eval(st.expr, env)
        elif isinstance(st, Return):
            raise _ReturnSignal(_eval(st.expr, env))
        elif isinstance(st, If):
            cond = _eval(st.cond, env)
            if type(cond) is not bool:
                raise EvalTypeError("if condition must be a boolean")
            if cond:
                _exec_body(st.body, env, gas)
        elif isinstance(st, For):
            seq = _eval(st.iterable, env)
            if type(seq) is not list:
                raise EvalTypeError("for loop requires a list")
            for item in seq:
                env[st.var] = item
                _exec_body(st.body, env, gas)
        else:  # pragma: no cover - parser only emits the above
            raise EvalTypeError(f"unknown statement {st!r}")


def _eval(expr, env):
    if isinstance(expr, Literal):
        return list(expr.value) if type(expr.value) is tuple else expr.value
    if isinstance(expr, Name):
        try:
            return env[expr.ident]
        except KeyError:
            raise UndefinedVariable(expr.ident) from None
    if isinstance(expr, Call):
        arg = _eval(expr.args[0], env)
        if type(arg) is not list:
            raise EvalTypeError("len() requires a list")
        return len(arg)
    if isinstance(expr, BinOp):
        return _binop(expr.op, expr, env)
    raise EvalTypeError(f"unknown expression {expr!r}")  # pragma: no cover


def _binop(op, expr, env):
    a = _eval(expr.left, env)
    b = _eval(expr.right, env)
    if op == "and":
        if type(a) is bool and type(b) is bool:
            return a and b
        raise EvalTypeError("'and' requires booleans")
    if op in REL_OPS:
        if type(a) is int and type(b) is int:
            return {"<": a < b, "<=": a <= b, "==": a == b,
                    ">=": a >= b, ">": a > b, "!=": a != b}[op]
        raise EvalTypeError(f"comparison {op!r} requires integers")
    if op == "+":
        if type(a) is int and type(b) is int:
            return a + b
        if type(a) is list and type(b) is int:
            return a + [b]
        if type(a) is list and type(b) is list:
            return a + b
        raise EvalTypeError("'+' requires int+int, list+int or list+list")
    if op in ("-", "*"):
        if type(a) is int and type(b) is int:
            return a - b if op == "-" else a * b
        raise EvalTypeError(f"{op!r} requires integers")
    raise EvalTypeError(f"unknown operator {op!r}")  # pragma: no cover
