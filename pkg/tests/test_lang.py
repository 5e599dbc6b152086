import pytest

from resketch.data import tokenize_nl
from resketch.errors import (
    ArityError,
    EvalTypeError,
    FuelExhausted,
    LexError,
    MissingReturn,
    ParseError,
    UndefinedVariable,
)
from resketch.lang import (
    Assign,
    BinOp,
    For,
    If,
    Literal,
    Name,
    Program,
    Return,
    detokenize,
    parse_program,
    parse_text,
    run_program,
    tokenize_code,
)

COUNT_RANGE = (
    "def count_range ( xs , lo , hi ) :\n"
    "    result = 0\n"
    "    for x in xs :\n"
    "        if x >= lo and x <= hi :\n"
    "            result = result + 1\n"
    "    return result\n"
)


# -- NL tokenizer ----------------------------------------------------------

def test_tokenize_nl_basic():
    assert tokenize_nl("Count items in a range.") == \
        ["count", "items", "in", "a", "range", "."]


def test_tokenize_nl_empty():
    assert tokenize_nl("") == []


def test_tokenize_nl_symbols():
    # verified by hand against the tokenizer rules: lowercase alnum runs,
    # every other non-space character alone
    assert tokenize_nl("gain +2/+2") == ["gain", "+", "2", "/", "+", "2"]


def test_tokenize_nl_deterministic():
    s = "Return the SUM of values >= 12, please."
    assert tokenize_nl(s) == tokenize_nl(s)


# -- code lexer ------------------------------------------------------------

def test_tokenize_code_flat():
    assert tokenize_code("result = result + 1") == \
        ["result", "=", "result", "+", "1"]


def test_tokenize_code_signature():
    assert tokenize_code("def f ( a ) :") == ["def", "f", "(", ")", ":"][:2] + \
        ["(", "a", ")", ":"]


def test_tokenize_code_blocks():
    toks = tokenize_code("def f ( a ) :\n    return a\n")
    assert toks == ["def", "f", "(", "a", ")", ":", "<ind>", "return", "a",
                    "<ded>"]


def test_tokenize_code_rejects_alien_chars():
    with pytest.raises(LexError):
        tokenize_code("def f ( a ) : # comment")
    with pytest.raises(LexError):
        tokenize_code("x = 1\n\ty = 2")


def test_tokenize_code_round_trip():
    toks = tokenize_code(COUNT_RANGE)
    prog = parse_program(toks)
    again = detokenize(toks)
    assert parse_text(again) == prog
    assert tokenize_code(again) == toks


def test_detokenize_handles_unbalanced_dedents():
    text = detokenize(["<ded>", "return", "x"])
    assert "return x" in text


# -- parser ----------------------------------------------------------------

def test_parse_single_return():
    prog = parse_text("def f ( a ) :\n    return a\n")
    assert prog == Program(name="f", params=("a",),
                           body=(Return(expr=Name("a")),))


def test_parse_unbalanced_paren():
    with pytest.raises(ParseError):
        parse_text("def f ( a :\n    return a\n")


def test_parse_counting_loop_shape():
    # hand-drawn tree for the motivating counting program
    prog = parse_text(COUNT_RANGE)
    assert prog.params == ("xs", "lo", "hi")
    init, loop, ret = prog.body
    assert init == Assign(target="result", expr=Literal(0))
    assert isinstance(loop, For) and loop.var == "x"
    assert loop.iterable == Name("xs")
    (guard,) = loop.body
    assert isinstance(guard, If)
    assert guard.cond == BinOp(
        op="and",
        left=BinOp(op=">=", left=Name("x"), right=Name("lo")),
        right=BinOp(op="<=", left=Name("x"), right=Name("hi")))
    assert guard.body == (Assign(
        target="result",
        expr=BinOp(op="+", left=Name("result"), right=Literal(1))),)
    assert ret == Return(expr=Name("result"))


def test_parse_rejects_use_before_assignment():
    with pytest.raises(ParseError):
        parse_text("def f ( a ) :\n    b = c + 1\n    return b\n")


def test_parse_rejects_trailing_tokens():
    toks = tokenize_code("def f ( a ) :\n    return a\n") + ["x"]
    with pytest.raises(ParseError):
        parse_program(toks)


def test_parse_error_reports_token_index():
    toks = tokenize_code("def f ( a ) :\n    return +\n")
    with pytest.raises(ParseError) as exc:
        parse_program(toks)
    assert exc.value.token_index == toks.index("+", 3)


# -- interpreter -----------------------------------------------------------

def test_run_identity():
    prog = parse_text("def ident ( a ) :\n    return a\n")
    assert run_program(prog, [7]) == 7


def test_run_count_range():
    # hand execution: only 5 lies inside [2, 6]
    prog = parse_text(COUNT_RANGE)
    assert run_program(prog, [[1, 5, 9], 2, 6]) == 1


def test_run_fuel_exhaustion():
    looping = parse_text(
        "def spin ( xs ) :\n"
        "    n = 0\n"
        "    for x in xs :\n"
        "        for y in xs :\n"
        "            n = n + 1\n"
        "    return n\n"
    )
    with pytest.raises(FuelExhausted):
        run_program(looping, [list(range(30))], fuel=100)
    assert run_program(looping, [[1, 2]], fuel=100) == 4


def test_run_arity_error():
    prog = parse_text("def ident ( a ) :\n    return a\n")
    with pytest.raises(ArityError):
        run_program(prog, [1, 2])


def test_run_type_errors():
    prog = parse_text("def f ( a ) :\n    return a + 1\n")
    with pytest.raises(EvalTypeError):
        run_program(prog, [True])
    loop = parse_text("def f ( a ) :\n    for x in a :\n        y = x\n"
                      "    return 0\n")
    with pytest.raises(EvalTypeError):
        run_program(loop, [3])


def test_run_list_append_and_concat():
    prog = parse_text("def f ( xs ) :\n    ys = xs + 5\n    return ys\n")
    assert run_program(prog, [[1, 2]]) == [1, 2, 5]
    prog2 = parse_text("def f ( xs ) :\n    ys = xs + xs\n    return ys\n")
    assert run_program(prog2, [[1]]) == [1, 1]


def test_run_len_builtin():
    prog = parse_text("def f ( xs ) :\n    return len ( xs )\n")
    assert run_program(prog, [[4, 5, 6]]) == 3


def test_run_missing_return():
    prog = parse_text("def f ( a ) :\n    b = a\n")
    with pytest.raises(MissingReturn):
        run_program(prog, [1])


def test_run_undefined_at_runtime():
    prog = parse_text(
        "def f ( a ) :\n"
        "    if a > 0 :\n"
        "        b = 1\n"
        "    return b\n"
    )
    assert run_program(prog, [5]) == 1
    with pytest.raises(UndefinedVariable):
        run_program(prog, [-5])


def test_flat_operator_precedence():
    # the expression grammar is single-level and left-associative
    prog = parse_text("def f ( a ) :\n    return 2 + 3 * a\n")
    assert run_program(prog, [4]) == 20


def test_interpreter_is_reentrant():
    prog = parse_text(COUNT_RANGE)
    first = run_program(prog, [[1, 5, 9], 2, 6])
    second = run_program(prog, [[2, 3, 4], 2, 6])
    assert (first, second) == (1, 3)


def test_interpreter_totality_under_fuel():
    # random token-level mutations either fail to parse or interpret to a
    # value / declared error within the fuel bound — never anything else
    import numpy as np
    from resketch.errors import EvalError
    from resketch.lang import is_value
    rng = np.random.default_rng(17)
    base = tokenize_code(COUNT_RANGE)
    replacements = ["result", "x", "xs", "lo", "hi", "0", "1", "9",
                    "+", "-", "*", ">=", "<=", "==", "(", ")", ":", "=",
                    "for", "if", "return", "in", "and", "len", "[", "]",
                    "<ind>", "<ded>"]
    for _ in range(300):
        toks = list(base)
        for _ in range(int(rng.integers(1, 4))):
            i = int(rng.integers(0, len(toks)))
            toks[i] = replacements[int(rng.integers(0, len(replacements)))]
        try:
            prog = parse_program(toks)
        except (LexError, ParseError):
            continue
        try:
            value = run_program(prog, [[1, 5, 9], 2, 6][:len(prog.params)],
                                fuel=2000)
        except EvalError:
            continue
        assert is_value(value)
