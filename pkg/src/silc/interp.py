"""Reference interpreter: executes raw IL directly on an operand stack.

Independent of every compiler pass; only the arithmetic table is shared.
Array references are host objects, the integer 0 doubles as null.
"""

from __future__ import annotations

from .il import BINARY_OPS, COMPARE_BRANCHES, Op, unit_index
from .semantics import (BINARY, COMPARE, UNARY, Trap, TrapCode, wrap)
from .target import MAX_CALL_DEPTH, ExecResult


class ExecutionError(Exception):
    """The program misused a value in a way validation cannot rule out
    (an integer used as an array, a reference in arithmetic)."""


class ArrayObj:
    __slots__ = ("data",)

    def __init__(self, n):
        self.data = [0] * n

    def __repr__(self):
        return f"ArrayObj({self.data})"


def _int(v):
    if type(v) is not int:
        raise ExecutionError(f"expected int32, got {v!r}")
    return v


def _ref(v):
    if v == 0 and type(v) is int:
        raise Trap(TrapCode.NULL_REF)
    if type(v) is not ArrayObj:
        raise ExecutionError(f"expected array reference, got {v!r}")
    return v


class _Frame:
    __slots__ = ("m", "pc", "args", "locs", "stack")

    def __init__(self, m, args):
        self.m = m
        self.pc = 0
        self.args = args
        self.locs = [0] * m.local_count
        self.stack = []


def interpret(methods, entry, args=(), max_steps=100_000_000, array=None):
    unit = unit_index(methods)
    m = unit[entry]
    args = [wrap(a) for a in args]
    arr = None
    if array is not None:
        arr = ArrayObj(0)
        arr.data = [wrap(v) for v in array]
        args = [arr] + args
    if len(args) != m.arg_count:
        raise ValueError(f"{entry} takes {m.arg_count} arguments, got {len(args)}")
    frames = [_Frame(m, list(args))]
    steps = 0
    counts = {}
    result = ExecResult()
    try:
        while True:
            f = frames[-1]
            ins = f.m.body[f.pc]
            if steps >= max_steps:
                raise Trap(TrapCode.STEP_BUDGET)
            steps += 1
            op = ins.op
            counts[op.value] = counts.get(op.value, 0) + 1
            st = f.stack
            f.pc += 1
            if op is Op.LDC:
                st.append(ins.arg)
            elif op is Op.LDLOC:
                st.append(f.locs[ins.arg])
            elif op is Op.STLOC:
                f.locs[ins.arg] = st.pop()
            elif op is Op.LDARG:
                st.append(f.args[ins.arg])
            elif op is Op.STARG:
                f.args[ins.arg] = st.pop()
            elif op in BINARY_OPS:
                b = _int(st.pop())
                a = _int(st.pop())
                st.append(BINARY[op.value](a, b))
            elif op is Op.NEG or op is Op.NOT:
                st.append(UNARY[op.value](_int(st.pop())))
            elif op is Op.DUP:
                st.append(st[-1])
            elif op is Op.POP:
                st.pop()
            elif op is Op.BR or op is Op.LEAVE:
                f.pc = ins.arg
            elif op in COMPARE_BRANCHES:
                b = _int(st.pop())
                a = _int(st.pop())
                if COMPARE[op.value](a, b):
                    f.pc = ins.arg
            elif op is Op.BRTRUE or op is Op.BRFALSE:
                v = st.pop()
                truthy = v is not None and not (type(v) is int and v == 0)
                if truthy == (op is Op.BRTRUE):
                    f.pc = ins.arg
            elif op is Op.SWITCH:
                v = _int(st.pop())
                if 0 <= v < len(ins.arg):
                    f.pc = ins.arg[v]
            elif op is Op.RET:
                v = st.pop() if f.m.returns_value else None
                frames.pop()
                if not frames:
                    result.return_value = v
                    break
                if v is not None:
                    frames[-1].stack.append(v)
            elif op is Op.CALL:
                callee = unit[ins.arg]
                k = callee.arg_count
                cargs = st[len(st) - k:] if k else []
                del st[len(st) - k:]
                if len(frames) >= MAX_CALL_DEPTH:
                    raise Trap(TrapCode.STEP_BUDGET)
                frames.append(_Frame(callee, cargs))
            elif op is Op.NEWARR:
                n = _int(st.pop())
                if n < 0:
                    raise Trap(TrapCode.INDEX_RANGE)
                st.append(ArrayObj(n))
            elif op is Op.LDLEN:
                st.append(len(_ref(st.pop()).data))
            elif op is Op.LDELEM:
                i = _int(st.pop())
                a = _ref(st.pop())
                if not 0 <= i < len(a.data):
                    raise Trap(TrapCode.INDEX_RANGE)
                st.append(a.data[i])
            elif op is Op.STELEM:
                v = _int(st.pop())
                i = _int(st.pop())
                a = _ref(st.pop())
                if not 0 <= i < len(a.data):
                    raise Trap(TrapCode.INDEX_RANGE)
                a.data[i] = v
            elif op is Op.TRAP:
                raise Trap(ins.arg)
            else:
                raise ExecutionError(f"unknown opcode {op}")
    except Trap as t:
        result.trap = t.code
    except IndexError:
        raise ExecutionError("operand stack underflow") from None
    result.steps = steps
    result.counts = counts
    if arr is not None:
        result.array = list(arr.data)
    if isinstance(result.return_value, ArrayObj):
        raise ExecutionError("entry method returned an array reference")
    return result
