import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from containment.expr import (BinOp, Call, ExprDomainError, MAX_STACK, Neg, Num, ParseError,
                              UnknownIdentifierError, Var, compile_expr, eval_program, evaluate,
                              parse_expr, render)


@pytest.mark.parametrize("src,x,expected", [
    ("-x", 3.0, -3.0),
    ("-x - x^3", 2.0, -10.0),
    ("min(-x, 2*x)", -1.0, -2.0),
    ("2^3^2", 0.0, 512.0),          # right associative
    ("-2^2", 0.0, -4.0),            # unary minus binds looser than ^
    ("2^-1", 0.0, 0.5),
    ("8 / 4 / 2", 0.0, 1.0),
    ("1 - 2 - 3", 0.0, -4.0),
    ("sgn(0) + sgn(x) + abs(-x)", -2.5, 1.5),
    ("max(x, 1e-3)", 0.0, 1e-3),
    ("tanh(x) + exp(0)", 0.0, 1.0),
])
def test_examples(src, x, expected):
    node = parse_expr(src)
    assert evaluate(node, x) == pytest.approx(expected, abs=1e-15)
    got = eval_program(compile_expr(node), np.array([x]))[0]
    assert got == pytest.approx(expected, abs=1e-15)


def test_radial_variable():
    node = parse_expr("-5*r*max(sgn(1.5 - r), 0)", "r")
    assert evaluate(node, 1.0) == -5.0
    assert evaluate(node, 2.0) == 0.0
    with pytest.raises(UnknownIdentifierError):
        parse_expr("-x", "r")


@pytest.mark.parametrize("src,offset", [
    ("", 0),
    ("x +", 3),
    ("(x", 2),
    ("x $ 2", 2),
    ("2 x", 2),
    ("min(x)", 0),           # arity errors point at the function name
    ("1 + exp(x, 1)", 4),
])
def test_parse_errors_carry_offset(src, offset):
    with pytest.raises(ParseError) as ei:
        parse_expr(src)
    assert ei.value.offset == offset


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError) as ei:
        parse_expr("y + 1")
    assert ei.value.offset == 0
    with pytest.raises(UnknownIdentifierError):
        parse_expr("sin(x)")


@pytest.mark.parametrize("src,x", [("0^(-1)", 0.0), ("1/x", 0.0), ("(-x)^0.5", 1.0),
                                   ("exp(x)", 1000.0)])
def test_domain_errors(src, x):
    node = parse_expr(src)
    with pytest.raises(ExprDomainError):
        evaluate(node, x)
    assert math.isnan(eval_program(compile_expr(node), np.array([x]))[0])


def test_nan_poisons_min_max():
    prog = compile_expr(parse_expr("min(1/x, 1)"))
    out = eval_program(prog, np.array([0.0, 2.0]))
    assert math.isnan(out[0]) and out[1] == 0.5


def test_stack_limit():
    deep = "x" + " + (x" * (MAX_STACK + 1) + ")" * (MAX_STACK + 1)
    with pytest.raises(ValueError, match="stack depth"):
        compile_expr(parse_expr(deep))


# ---------------------------------------------------------------- properties

_num = st.floats(0, 1e3, allow_nan=False).map(lambda v: Num(float(v)))
_leaf = st.one_of(_num, st.just(Var("x")))


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda t: BinOp(*t)),
        st.tuples(st.sampled_from(["exp", "tanh", "abs", "sgn"]), children)
          .map(lambda t: Call(t[0], (t[1],))),
        st.tuples(st.sampled_from(["min", "max"]), children, children)
          .map(lambda t: Call(t[0], (t[1], t[2]))),
    )


ast = st.recursive(_leaf, _extend, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(ast)
def test_render_parse_round_trip(node):
    assert parse_expr(render(node)) == node


@settings(max_examples=200, deadline=None)
@given(ast, st.floats(-5, 5, allow_nan=False))
def test_compiled_matches_strict(node, x):
    got = eval_program(compile_expr(node), np.array([x]))[0]
    try:
        want = evaluate(node, x)
    except ExprDomainError:
        assert not math.isfinite(got)
        return
    if math.isfinite(got):
        assert got == pytest.approx(want, rel=1e-12, abs=1e-300)
