"""Single-pass template code generator.

Every IL instruction expands to a fixed sequence that keeps intermediate
values on the machine stack, working almost only through R0 with R3 (and R2
for divisors, shift counts and stored values) as scratch. Uses the same frame
offsets, call convention and trap stubs as the optimizing backend.
"""

from __future__ import annotations

from .codegen import assemble, epilogue, prologue
from .il import BINARY_OPS, CONDITIONAL, CompilerBug, Op
from .semantics import TrapCode
from .target import WORD, Frame, Mem, Reg, TInstr

R0, R2, R3 = Reg.R0, Reg.R2, Reg.R3

_ALU = {Op.ADD: "ADD", Op.SUB: "SUB", Op.MUL: "MUL", Op.AND: "AND", Op.OR: "OR",
        Op.XOR: "XOR", Op.SHL: "SHL", Op.SHR: "SHR", Op.SHRU: "SHRU"}
_JCC = {Op.BEQ: "JE", Op.BNE: "JNE", Op.BLT: "JL", Op.BLE: "JLE", Op.BGT: "JG",
        Op.BGE: "JGE"}


def generate_baseline(m, unit=None):
    from .il import unit_index

    unit = unit_index(unit if unit is not None else [m])
    frame = Frame(m.arg_count, m.local_count, saves_callee_regs=True)
    code = []
    fixups = []
    starts = {}
    stubs = []
    cur = [0]

    def emit(mnem, dst=None, src=None, target=None):
        ins = TInstr(mnem, dst, src, block=cur[0])
        if target is not None:
            fixups.append((len(code), target))
            ins.target = target
        code.append(ins)
        return ins

    def stub(tc):
        tc = TrapCode(tc)
        if tc not in stubs:
            stubs.append(tc)
        return ("stub", tc)

    # Every branch target starts a labeled position.
    for off, ins in enumerate(m.body):
        starts_needed = ins.targets()
        for t in starts_needed:
            starts.setdefault(t, None)

    n = len(m.body)
    for off, ins in enumerate(m.body):
        cur[0] = off
        if off in starts:
            starts[off] = len(code)
        op = ins.op
        if op is Op.LDC:
            emit("MOV", R0, ins.arg)
            emit("PUSH", R0)
        elif op is Op.LDLOC:
            emit("MOV", R0, frame.local(ins.arg))
            emit("PUSH", R0)
        elif op is Op.LDARG:
            emit("MOV", R0, frame.arg(ins.arg))
            emit("PUSH", R0)
        elif op is Op.STLOC:
            emit("POP", R0)
            emit("MOV", frame.local(ins.arg), R0)
        elif op is Op.STARG:
            emit("POP", R0)
            emit("MOV", frame.arg(ins.arg), R0)
        elif op in (Op.DIV, Op.REM):
            emit("POP", R2)
            emit("POP", R0)
            emit("DIV", R2)
            emit("PUSH", R0 if op is Op.DIV else R3)
        elif op in (Op.SHL, Op.SHR, Op.SHRU):
            emit("POP", R2)
            emit("POP", R0)
            emit(_ALU[op], R0, R2)
            emit("PUSH", R0)
        elif op in BINARY_OPS:
            emit("POP", R3)
            emit("POP", R0)
            emit(_ALU[op], R0, R3)
            emit("PUSH", R0)
        elif op in (Op.NEG, Op.NOT):
            emit("POP", R0)
            emit(op.name, R0)
            emit("PUSH", R0)
        elif op is Op.DUP:
            emit("POP", R0)
            emit("PUSH", R0)
            emit("PUSH", R0)
        elif op is Op.POP:
            emit("POP", R0)
        elif op in (Op.BR, Op.LEAVE):
            emit("JMP", target=("block", ins.arg))
        elif op in _JCC:
            emit("POP", R3)
            emit("POP", R0)
            emit("CMP", R0, R3)
            emit(_JCC[op], target=("block", ins.arg))
        elif op in CONDITIONAL:
            emit("POP", R0)
            emit("CMP", R0, 0)
            emit("JNE" if op is Op.BRTRUE else "JE", target=("block", ins.arg))
        elif op is Op.SWITCH:
            emit("POP", R0)
            for k, t in enumerate(ins.arg):
                emit("CMP", R0, k)
                emit("JE", target=("block", t))
        elif op is Op.RET:
            if m.returns_value:
                emit("POP", R0)
            emit("JMP", target=("epi",))
        elif op is Op.CALL:
            callee = unit[ins.arg]
            emit("CALL").target = ins.arg
            if callee.arg_count:
                emit("ADD", Reg.SP, WORD * callee.arg_count)
            if callee.returns_value:
                emit("PUSH", R0)
        elif op is Op.NEWARR:
            emit("POP", R0)
            emit("ALLOC", R0, R0)
            emit("PUSH", R0)
        elif op is Op.LDLEN:
            emit("POP", R0)
            emit("CMP", R0, 0)
            emit("JE", target=stub(TrapCode.NULL_REF))
            emit("MOV", R0, Mem(R0))
            emit("PUSH", R0)
        elif op is Op.LDELEM:
            emit("POP", R3)
            emit("POP", R0)
            emit("CMP", R0, 0)
            emit("JE", target=stub(TrapCode.NULL_REF))
            emit("CMP", R3, Mem(R0))
            emit("JAE", target=stub(TrapCode.INDEX_RANGE))
            emit("SHL", R3, 2)
            emit("ADD", R3, R0)
            emit("MOV", R0, Mem(R3, None, 1, WORD))
            emit("PUSH", R0)
        elif op is Op.STELEM:
            emit("POP", R2)
            emit("POP", R3)
            emit("POP", R0)
            emit("CMP", R0, 0)
            emit("JE", target=stub(TrapCode.NULL_REF))
            emit("CMP", R3, Mem(R0))
            emit("JAE", target=stub(TrapCode.INDEX_RANGE))
            emit("SHL", R3, 2)
            emit("ADD", R3, R0)
            emit("MOV", Mem(R3, None, 1, WORD), R2)
        elif op is Op.TRAP:
            emit("JMP", target=stub(ins.arg))
        else:
            raise CompilerBug(f"no template for {op}")
    if n and code and code[-1].mnem == "JMP" and code[-1].target == ("epi",):
        code.pop()
        fixups.pop()
    for off, pos in starts.items():
        if pos is None:
            raise CompilerBug(f"{m.name}: branch target {off} has no code")
    head = prologue(frame, ())
    return assemble(m.name, frame, m.returns_value, head, code, fixups, starts,
                    epilogue(()), stubs)
