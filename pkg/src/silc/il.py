"""The stack IL: instruction set, method model, ``.sil`` parser/printer and
the structural validator that every later pass relies on."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Optional, Union

from .semantics import INT_MAX, INT_MIN, TrapCode


class SilError(Exception):
    """A user-facing error in an input program."""


class ParseError(SilError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class ValidationError(SilError):
    def __init__(self, msg, method=None, offset=None):
        self.method = method
        self.offset = offset
        where = ""
        if method is not None:
            where = f"{method}"
            if offset is not None:
                where += f"@{offset}"
            where += ": "
        super().__init__(where + msg)


class CompilerBug(AssertionError):
    """An internal inconsistency; never caused by a validated input."""


class Op(str, enum.Enum):
    LDC = "ldc"
    LDLOC = "ldloc"
    STLOC = "stloc"
    LDARG = "ldarg"
    STARG = "starg"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    REM = "rem"
    AND = "and"
    OR = "or"
    XOR = "xor"
    SHL = "shl"
    SHR = "shr"
    SHRU = "shru"
    NEG = "neg"
    NOT = "not"
    DUP = "dup"
    POP = "pop"
    BR = "br"
    BEQ = "beq"
    BNE = "bne"
    BLT = "blt"
    BLE = "ble"
    BGT = "bgt"
    BGE = "bge"
    BRTRUE = "brtrue"
    BRFALSE = "brfalse"
    SWITCH = "switch"
    LEAVE = "leave"
    RET = "ret"
    CALL = "call"
    NEWARR = "newarr"
    LDLEN = "ldlen"
    LDELEM = "ldelem"
    STELEM = "stelem"
    TRAP = "trap"

    def __str__(self):
        return self.value


BINARY_OPS = frozenset({Op.ADD, Op.SUB, Op.MUL, Op.DIV, Op.REM, Op.AND, Op.OR,
                        Op.XOR, Op.SHL, Op.SHR, Op.SHRU})
UNARY_OPS = frozenset({Op.NEG, Op.NOT})
COMPARE_BRANCHES = frozenset({Op.BEQ, Op.BNE, Op.BLT, Op.BLE, Op.BGT, Op.BGE})
CONDITIONAL = COMPARE_BRANCHES | {Op.BRTRUE, Op.BRFALSE}
UNCONDITIONAL = frozenset({Op.BR, Op.LEAVE})
# Instructions after which control never falls through.
TERMINATORS = frozenset({Op.BR, Op.LEAVE, Op.RET, Op.TRAP})
BLOCK_ENDERS = TERMINATORS | CONDITIONAL | {Op.SWITCH}

_INT_OPERAND = frozenset({Op.LDC})
_INDEX_OPERAND = frozenset({Op.LDLOC, Op.STLOC, Op.LDARG, Op.STARG})
_LABEL_OPERAND = CONDITIONAL | UNCONDITIONAL

Operand = Union[None, int, str, tuple, TrapCode]


@dataclass(frozen=True)
class Instr:
    op: Op
    arg: Operand = None

    def targets(self):
        """Branch target offsets, in edge order."""
        if self.op in _LABEL_OPERAND:
            return (self.arg,)
        if self.op is Op.SWITCH:
            return self.arg
        return ()


@dataclass(frozen=True)
class MethodIL:
    name: str
    arg_count: int
    local_count: int
    returns_value: bool
    body: tuple

    def __len__(self):
        return len(self.body)


# -- parsing -----------------------------------------------------------------

_NAME = r"[A-Za-z_][A-Za-z0-9_.$]*"
_LABEL_RE = re.compile(rf"^({_NAME})\s*:\s*(.*)$")
_NAME_RE = re.compile(rf"^{_NAME}$")
_INT_RE = re.compile(r"^-?[0-9]+$")


def _parse_int(tok, lineno):
    if not _INT_RE.match(tok):
        raise ParseError(f"expected integer, got {tok!r}", lineno)
    return int(tok)


class _MethodBuilder:
    def __init__(self, name, args, locs, ret, lineno):
        self.name = name
        self.args = args
        self.locs = locs
        self.ret = ret
        self.lineno = lineno
        self.labels = {}
        self.pending_labels = []
        self.body = []   # (op, raw operand, lineno)

    def finish(self):
        if self.pending_labels:
            raise ParseError(f"label {self.pending_labels[0][0]!r} does not "
                             "precede an instruction", self.pending_labels[0][1])

        def resolve(label, lineno):
            if label not in self.labels:
                raise ParseError(f"unknown label {label!r}", lineno)
            return self.labels[label]

        body = []
        for op, raw, lineno in self.body:
            if op in _LABEL_OPERAND:
                arg = resolve(raw, lineno)
            elif op is Op.SWITCH:
                arg = tuple(resolve(lab, lineno) for lab in raw)
            else:
                arg = raw
            body.append(Instr(op, arg))
        return MethodIL(self.name, self.args, self.locs, self.ret, tuple(body))


def _parse_operand(op, text, lineno):
    if op in _INT_OPERAND:
        if not text:
            raise ParseError(f"{op} needs an integer operand", lineno)
        v = _parse_int(text, lineno)
        if not INT_MIN <= v <= INT_MAX:
            raise ParseError(f"constant {v} does not fit in 32 bits", lineno)
        return v
    if op in _INDEX_OPERAND:
        if not text:
            raise ParseError(f"{op} needs an index operand", lineno)
        v = _parse_int(text, lineno)
        if not 0 <= v <= 0xFFFF:
            raise ParseError(f"index {v} out of range", lineno)
        return v
    if op in _LABEL_OPERAND:
        if not _NAME_RE.match(text or ""):
            raise ParseError(f"{op} needs a label operand", lineno)
        return text
    if op is Op.SWITCH:
        m = re.match(r"^\((.*)\)$", text or "")
        if not m:
            raise ParseError("switch needs a parenthesized label list", lineno)
        labels = [t.strip() for t in m.group(1).split(",")]
        if not all(_NAME_RE.match(t) for t in labels):
            raise ParseError("malformed switch label list", lineno)
        return tuple(labels)
    if op is Op.CALL:
        if not _NAME_RE.match(text or ""):
            raise ParseError("call needs a method name", lineno)
        return text
    if op is Op.TRAP:
        if not text:
            return TrapCode.EXPLICIT
        if _INT_RE.match(text):
            try:
                return TrapCode(int(text))
            except ValueError:
                raise ParseError(f"unknown trap code {text}", lineno) from None
        try:
            return TrapCode[text.upper()]
        except KeyError:
            raise ParseError(f"unknown trap code {text!r}", lineno) from None
    if text:
        raise ParseError(f"{op} takes no operand", lineno)
    return None


def parse(text):
    """Parse ``.sil`` source into a list of methods in declaration order."""
    methods = []
    names = set()
    cur = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith(".method"):
            if cur is not None:
                methods.append(cur.finish())
            toks = line.split()
            if (len(toks) != 7 or toks[3] != "args" or toks[5] != "locals"
                    or toks[6] not in ("ret", "void")
                    or not _NAME_RE.match(toks[1])):
                raise ParseError("malformed .method header; expected "
                                 "'.method NAME N args N locals ret|void'",
                                 lineno)
            if toks[1] in names:
                raise ParseError(f"duplicate method {toks[1]!r}", lineno)
            names.add(toks[1])
            args = _parse_int(toks[2], lineno)
            locs = _parse_int(toks[4], lineno)
            if not (0 <= args <= 0xFFFF and 0 <= locs <= 0xFFFF):
                raise ParseError("argument/local count out of range", lineno)
            cur = _MethodBuilder(toks[1], args, locs, toks[6] == "ret", lineno)
            continue
        if cur is None:
            raise ParseError("instruction outside of a .method", lineno)
        m = _LABEL_RE.match(line)
        if m:
            label, line = m.group(1), m.group(2).strip()
            if label in cur.labels or any(label == p for p, _ in cur.pending_labels):
                raise ParseError(f"duplicate label {label!r}", lineno)
            cur.pending_labels.append((label, lineno))
            if not line:
                continue
        parts = line.split(None, 1)
        try:
            op = Op(parts[0])
        except ValueError:
            raise ParseError(f"unknown mnemonic {parts[0]!r}", lineno) from None
        operand = _parse_operand(op, parts[1].strip() if len(parts) > 1 else "",
                                 lineno)
        for label, _ in cur.pending_labels:
            cur.labels[label] = len(cur.body)
        cur.pending_labels = []
        cur.body.append((op, operand, lineno))
    if cur is not None:
        methods.append(cur.finish())
    return methods


def format_method(m):
    targets = set()
    for ins in m.body:
        targets.update(ins.targets())
    lines = [f".method {m.name} {m.arg_count} args {m.local_count} locals "
             f"{'ret' if m.returns_value else 'void'}"]
    for off, ins in enumerate(m.body):
        prefix = f"L{off}: " if off in targets else "    "
        if ins.op in _LABEL_OPERAND:
            operand = f" L{ins.arg}"
        elif ins.op is Op.SWITCH:
            operand = " (" + ", ".join(f"L{t}" for t in ins.arg) + ")"
        elif ins.op is Op.TRAP:
            operand = f" {ins.arg.name}"
        elif ins.arg is not None:
            operand = f" {ins.arg}"
        else:
            operand = ""
        lines.append(f"{prefix}{ins.op.value}{operand}")
    return "\n".join(lines) + "\n"


def format_methods(methods):
    return "\n".join(format_method(m) for m in methods)


# -- validation --------------------------------------------------------------

def unit_index(methods):
    if isinstance(methods, dict):
        return methods
    return {m.name: m for m in methods}


def stack_effect(ins, m, unit):
    """(pops, pushes) of one instruction."""
    op = ins.op
    if op in (Op.LDC, Op.LDLOC, Op.LDARG):
        return 0, 1
    if op in (Op.STLOC, Op.STARG, Op.POP, Op.BRTRUE, Op.BRFALSE, Op.SWITCH):
        return 1, 0
    if op in BINARY_OPS or op is Op.LDELEM:
        return 2, 1
    if op in UNARY_OPS or op in (Op.NEWARR, Op.LDLEN):
        return 1, 1
    if op is Op.DUP:
        return 1, 2
    if op in COMPARE_BRANCHES:
        return 2, 0
    if op is Op.STELEM:
        return 3, 0
    if op in (Op.BR, Op.LEAVE, Op.TRAP):
        return 0, 0
    if op is Op.RET:
        return (1 if m.returns_value else 0), 0
    if op is Op.CALL:
        callee = unit[ins.arg]
        return callee.arg_count, (1 if callee.returns_value else 0)
    raise CompilerBug(f"no stack effect for {op}")


def validate(m, unit=None):
    """Check structural well-formedness and return the entry stack depth of
    every reachable offset (``None`` for unreachable code)."""
    unit = unit_index(unit if unit is not None else [m])
    if m.name not in unit:
        unit = dict(unit)
        unit[m.name] = m
    n = len(m.body)
    if n == 0:
        raise ValidationError("empty method body", m.name)
    for off, ins in enumerate(m.body):
        if ins.op in (Op.LDLOC, Op.STLOC) and ins.arg >= m.local_count:
            raise ValidationError(f"local {ins.arg} out of range", m.name, off)
        if ins.op in (Op.LDARG, Op.STARG) and ins.arg >= m.arg_count:
            raise ValidationError(f"argument {ins.arg} out of range", m.name, off)
        if ins.op is Op.CALL and ins.arg not in unit:
            raise ValidationError(f"call to unknown method {ins.arg!r}", m.name, off)
        for t in ins.targets():
            if not 0 <= t < n:
                raise ValidationError(f"branch target {t} out of range",
                                      m.name, off)

    depths = [None] * n
    depths[0] = 0
    work = [0]
    while work:
        off = work.pop()
        ins = m.body[off]
        d = depths[off]
        pops, pushes = stack_effect(ins, m, unit)
        if d < pops:
            raise ValidationError("stack underflow", m.name, off)
        after = d - pops + pushes
        if ins.op is Op.RET:
            if d != pops:
                raise ValidationError(f"stack depth {d} at ret, expected {pops}",
                                      m.name, off)
            continue
        if ins.op is Op.TRAP:
            continue
        succs = [(t, True) for t in ins.targets()]
        if ins.op not in UNCONDITIONAL:
            succs.append((off + 1, False))
        for s, is_branch in succs:
            if s >= n:
                raise ValidationError("control falls through past the last "
                                      "instruction", m.name, off)
            if is_branch and s <= off and after != 0:
                raise ValidationError(f"nonzero stack depth {after} at loop "
                                      f"header {s}", m.name, off)
            if depths[s] is None:
                depths[s] = after
                work.append(s)
            elif depths[s] != after:
                raise ValidationError(f"inconsistent stack depth at join {s}: "
                                      f"{depths[s]} vs {after}", m.name, off)
    # A backward target may have been reached by fall-through first.
    for off, ins in enumerate(m.body):
        if depths[off] is None:
            continue
        for t in ins.targets():
            if t <= off and depths[t] != 0:
                raise ValidationError(f"nonzero stack depth {depths[t]} at "
                                      f"loop header {t}", m.name, off)
    return depths


def validate_unit(methods):
    """Validate every method; returns ``{name: depths}``."""
    unit = unit_index(methods)
    return {name: validate(m, unit) for name, m in unit.items()}
