import itertools

import pytest

from silc.interp import interpret
from silc.pipeline import compile_unit, load
from silc.semantics import BINARY, INT_MAX, INT_MIN, UNARY, TrapCode
from silc.target import execute

from conftest import outcomes
from oracles import wrap32

SAMPLES = sorted({0, 1, -1, 2, -2, 3, 7, -7, 31, 32, 33, INT_MIN, INT_MAX, INT_MIN + 1}
                 | {s * (1 << k) + d for k in range(0, 31, 5) for s in (1, -1)
                    for d in (-1, 0, 1)})
SAMPLES = [wrap32(v) for v in SAMPLES]


def expected(op, a, b):
    """Plain-integer definitions, written without the shared table."""
    u = lambda x: x & 0xFFFFFFFF
    if op in ("div", "rem"):
        if b == 0:
            return ("trap", TrapCode.DIV_ZERO)
        if a == INT_MIN and b == -1:
            return ("trap", TrapCode.OVERFLOW)
        q = abs(a) // abs(b) * (1 if (a >= 0) == (b >= 0) else -1)
        return ("value", q if op == "div" else a - q * b)
    v = {"add": a + b, "sub": a - b, "mul": a * b, "and": u(a) & u(b),
         "or": u(a) | u(b), "xor": u(a) ^ u(b), "shl": u(a) << (b % 32),
         "shr": a >> (b % 32), "shru": u(a) >> (b % 32)}[op]
    return ("value", wrap32(v))


def _programs(op):
    text = f".method m 2 args 0 locals ret\n ldarg 0\n ldarg 1\n {op}\n ret\n"
    ms, d = load(text)
    return ms, [compile_unit(ms, d, b).program for b in ("baseline", "opt")]


@pytest.mark.parametrize("op", sorted(BINARY))
def test_binary_parity(op):
    ms, progs = _programs(op)
    for a, b in itertools.product(SAMPLES, repeat=2):
        want = expected(op, a, b)
        assert interpret(ms, "m", [a, b]).outcome() == want, (a, b)
        for p in progs:
            assert execute(p, "m", [a, b]).outcome() == want, (p.backend, a, b)


@pytest.mark.parametrize("op", sorted(BINARY))
def test_folding_matches_runtime(op):
    for a, b in itertools.product(SAMPLES[::3], repeat=2):
        text = f".method m 0 args 0 locals ret\n ldc {a}\n ldc {b}\n {op}\n ret\n"
        ms, d = load(text)
        prog = compile_unit(ms, d).program
        assert execute(prog, "m").outcome() == expected(op, a, b)


@pytest.mark.parametrize("op", sorted(UNARY))
def test_unary_parity(op):
    ms, d = load(f".method m 1 args 0 locals ret\n ldarg 0\n {op}\n ret\n")
    prog = compile_unit(ms, d).program
    for a in SAMPLES:
        want = wrap32(-a) if op == "neg" else wrap32(~a)
        assert execute(prog, "m", [a]).return_value == want
        assert interpret(ms, "m", [a]).return_value == want


@pytest.mark.parametrize("br", ["beq", "bne", "blt", "ble", "bgt", "bge"])
def test_compare_branches(br):
    text = (f".method m 2 args 0 locals ret\n ldarg 0\n ldarg 1\n {br} yes\n"
            " ldc 0\n ret\nyes: ldc 1\n ret\n")
    for a, b in itertools.product(SAMPLES[::4], repeat=2):
        out = outcomes(text, "m", [a, b], checked=False)
        assert out["baseline"] == out["opt"] == out["interp"]


def test_six_times_seven():
    ms, d = load(".method m 2 args 0 locals ret\n ldarg 0\n ldarg 1\n mul\n ret\n")
    r = execute(compile_unit(ms, d).program, "m", [6, 7])
    assert r.return_value == 42 and r.steps >= 1 and r.trap is None


def test_null_reference_traps():
    text = ".method m 1 args 0 locals ret\n ldarg 0\n ldlen\n ret\n"
    ms, d = load(text)
    for b in ("baseline", "opt"):
        r = execute(compile_unit(ms, d, b).program, "m", [0])
        assert r.trap is TrapCode.NULL_REF and r.return_value is None


def test_infinite_loop_hits_budget():
    out = outcomes(".method m 0 args 0 locals void\nL: br L\n", "m", max_steps=1000)
    assert set(out.values()) == {("trap", TrapCode.STEP_BUDGET)}


def test_deep_recursion_is_bounded():
    text = (".method m 1 args 0 locals ret\n ldarg 0\n ldc 1\n add\n call m\n ret\n")
    out = outcomes(text, "m", [0], checked=False)
    assert set(out.values()) == {("trap", TrapCode.STEP_BUDGET)}


def test_step_counts_deterministic(corpus):
    ms, d = load(corpus["rc4"])
    prog = compile_unit(ms, d).program
    key = [1, 2, 3, 4, 5]
    runs = [execute(prog, "rc4", [300], array=key) for _ in range(3)]
    assert len({(r.steps, r.return_value) for r in runs}) == 1


def test_arrays_round_trip():
    text = (".method m 1 args 1 locals ret\n ldarg 0\n newarr\n stloc 0\n"
            " ldloc 0\n ldc 0\n ldc 41\n stelem\n ldloc 0\n ldc 0\n ldelem\n"
            " ldloc 0\n ldlen\n add\n ret\n")
    out = outcomes(text, "m", [1])
    assert set(out.values()) == {("value", 42)}
    out = outcomes(text, "m", [0])
    assert set(out.values()) == {("trap", TrapCode.INDEX_RANGE)}
    out = outcomes(text, "m", [-1])
    assert len(set(out.values())) == 1
