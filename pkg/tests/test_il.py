import pytest
from hypothesis import given, settings, strategies as st

from silc.fuzz import random_unit, roundtrip
from silc.il import Op, ParseError, ValidationError, format_methods, parse, validate
from silc.interp import ExecutionError, interpret
from silc.semantics import TrapCode


def test_parse_simple_method():
    [m] = parse(".method m 0 args 1 locals ret\n ldc 5\n stloc 0\n ldloc 0\n ret")
    assert (m.name, m.arg_count, m.local_count, m.returns_value) == ("m", 0, 1, True)
    assert len(m.body) == 4
    assert m.body[0].op is Op.LDC and m.body[0].arg == 5


def test_labels_resolve_to_offsets():
    [m] = parse(".method m 1 args 0 locals ret\n"
                "  ldarg 0\n  brtrue yes\n  ldc 0\n  ret\n"
                "yes: ldc 1\n  ret\n")
    assert m.body[1].arg == 4


def test_switch_and_comments():
    [m] = parse(".method m 1 args 0 locals void ; header\n"
                "  ldarg 0\n  switch (a, b)\n  ret\n"
                "a: ret\nb:\n  ret\n")
    assert m.body[1].op is Op.SWITCH and m.body[1].arg == (3, 4)
    assert not m.returns_value


def test_vindex_method_has_eight_instructions(corpus):
    [m] = parse(corpus["vindex"])
    assert [i.op for i in m.body] == [Op.LDARG, Op.LDARG, Op.LDARG, Op.MUL,
                                     Op.LDARG, Op.ADD, Op.LDELEM, Op.RET]


@pytest.mark.parametrize("text, fragment", [
    (".method m 0 args 0 locals void\n br L1\n", "unknown label"),
    (".method m 0 args 0 locals void\nL: ret\nL: ret\n", "duplicate label"),
    (".method m 0 args 0 locals void\n frob\n", "unknown mnemonic"),
    (".method m 0 args 0 locals void\n ldc x\n", "expected integer"),
    (".method m 0 args 0 locals void\n ldc 4294967296\n", "32 bits"),
    (".method m 1 args\n ret\n", "malformed"),
    ("ret\n", "outside"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError, match=fragment):
        parse(text)


def test_parse_error_reports_line():
    with pytest.raises(ParseError) as e:
        parse(".method m 0 args 0 locals void\n ret\n\n bogus\n")
    assert e.value.line == 4


def test_trap_operand_forms():
    [m] = parse(".method m 0 args 0 locals void\n trap div_zero\n trap 4\n trap\n")
    assert [i.arg for i in m.body] == [TrapCode.DIV_ZERO, TrapCode.INDEX_RANGE,
                                      TrapCode.EXPLICIT]


def test_validate_depths():
    [m] = parse(".method m 0 args 0 locals ret\n ldc 1\n ldc 2\n add\n ret\n")
    assert validate(m) == [0, 1, 2, 1]


@pytest.mark.parametrize("src, fragment", [
    ("0 args 0 locals void\n pop\n ret", "underflow"),
    ("1 args 0 locals ret\n ldarg 0\n brtrue a\n ldc 1\n ldc 2\n br j\n"
     "a: ldc 3\nj: trap", "inconsistent"),
    ("0 args 0 locals void\n ldc 1\nL: ldc 1\n brtrue L\n pop\n ret", "loop header"),
    ("0 args 0 locals void\n ldc 1\n pop", "falls through"),
    ("0 args 0 locals ret\n ldc 1\n ldc 2\n ret", "depth 2 at ret"),
    ("0 args 1 locals void\n ldloc 1\n pop\n ret", "out of range"),
    ("0 args 0 locals void\n call nowhere\n ret", "unknown method"),
])
def test_validate_rejects(src, fragment):
    [m] = parse(".method m " + src + "\n")
    with pytest.raises(ValidationError, match=fragment):
        validate(m)


def test_unreachable_code_has_no_depth():
    [m] = parse(".method m 0 args 0 locals void\n ret\n pop\n ret\n")
    assert validate(m) == [0, None, None]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_print_parse_roundtrip(seed):
    text = random_unit(seed)
    once = roundtrip(text)
    assert parse(once) == parse(text)
    assert roundtrip(once) == once


_STRAIGHT = ["ldc 3", "ldc -1", "add", "mul", "pop", "dup", "neg", "xor"]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(_STRAIGHT), max_size=12))
def test_validator_agrees_with_interpreter_on_underflow(ops):
    text = ".method m 0 args 0 locals ret\n" + "".join(f" {o}\n" for o in ops) + " ret\n"
    [m] = parse(text)
    try:
        interpret([m], "m")
        underflows = False
    except ExecutionError:
        underflows = True
    try:
        validate(m)
        rejected_for_underflow = False
    except ValidationError as e:
        rejected_for_underflow = "underflow" in str(e)
    assert underflows == rejected_for_underflow


def test_format_is_parseable():
    ms = parse(".method a 0 args 0 locals ret\n ldc 1\n ret\n"
               ".method b 1 args 0 locals void\n ldarg 0\n call a\n pop\n pop\n ret\n")
    assert parse(format_methods(ms)) == ms
