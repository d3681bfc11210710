"""Shared 32-bit integer semantics.

The reference interpreter, the constant folder and the target emulator all
evaluate arithmetic through this table so they agree bit for bit.
"""

import enum

INT_MIN = -(1 << 31)
INT_MAX = (1 << 31) - 1


class TrapCode(enum.IntEnum):
    DIV_ZERO = 1
    OVERFLOW = 2
    NULL_REF = 3
    INDEX_RANGE = 4
    EXPLICIT = 5
    STEP_BUDGET = 6


class Trap(Exception):
    """Raised by an evaluator when execution ends abnormally."""

    def __init__(self, code):
        super().__init__(code.name)
        self.code = TrapCode(code)


def wrap(x):
    return ((x + 0x80000000) & 0xFFFFFFFF) - 0x80000000


def _div(a, b):
    if b == 0:
        raise Trap(TrapCode.DIV_ZERO)
    if a == INT_MIN and b == -1:
        raise Trap(TrapCode.OVERFLOW)
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def _rem(a, b):
    if b == 0:
        raise Trap(TrapCode.DIV_ZERO)
    if a == INT_MIN and b == -1:
        raise Trap(TrapCode.OVERFLOW)
    r = abs(a) % abs(b)
    return -r if a < 0 else r


def _shru(a, b):
    return wrap((a & 0xFFFFFFFF) >> (b & 31))


BINARY = {
    "add": lambda a, b: wrap(a + b),
    "sub": lambda a, b: wrap(a - b),
    "mul": lambda a, b: wrap(a * b),
    "div": _div,
    "rem": _rem,
    "and": lambda a, b: a & b,
    "or": lambda a, b: a | b,
    "xor": lambda a, b: a ^ b,
    "shl": lambda a, b: wrap(a << (b & 31)),
    "shr": lambda a, b: a >> (b & 31),
    "shru": _shru,
}

UNARY = {
    "neg": lambda a: wrap(-a),
    "not": lambda a: ~a,
}

# Comparison predicates keyed by IL branch mnemonic.
COMPARE = {
    "beq": lambda a, b: a == b,
    "bne": lambda a, b: a != b,
    "blt": lambda a, b: a < b,
    "ble": lambda a, b: a <= b,
    "bgt": lambda a, b: a > b,
    "bge": lambda a, b: a >= b,
}

COMMUTATIVE = frozenset({"add", "mul", "and", "or", "xor"})


def binary(op, a, b):
    return BINARY[op](a, b)


def unary(op, a):
    return UNARY[op](a)
