"""Register-allocating code generation from the per-block DAGs.

Blocks are emitted in original IL order. Within a block the generator walks
the IR list once, allocating registers as it goes: the most recently freed
register is reused first and, when none is free, the least recently occupied
one is spilled into a frame slot. Loads flagged embeddable are not emitted;
their memory operand is folded into the consumer. Stores flagged embeddable
are written by their producer, either through a memory-destination ALU form
or by a store issued right after the producer.

Each node's machine location lives in its ``md`` slot:

    ("reg", r)   ("imm", k)   ("mem", Mem)   ("spill", k)   ("elem",)
"""

from __future__ import annotations

from .ddg import COND_BRANCHES, IrOp
from .il import CompilerBug
from .semantics import COMMUTATIVE, TrapCode
from .target import (ALLOC_ORDER, CALLEE_SAVED, CALLER_SAVED, SWAPPED, WORD,
                     Frame, Mem, MethodCode, Reg, TInstr)

_MNEM = {IrOp.ADD: "ADD", IrOp.SUB: "SUB", IrOp.MUL: "MUL", IrOp.AND: "AND",
         IrOp.OR: "OR", IrOp.XOR: "XOR", IrOp.SHL: "SHL", IrOp.SHR: "SHR",
         IrOp.SHRU: "SHRU", IrOp.NEG: "NEG", IrOp.NOT: "NOT"}
_SHIFTS = frozenset({IrOp.SHL, IrOp.SHR, IrOp.SHRU})
_JCC = {IrOp.BEQ: "JE", IrOp.BNE: "JNE", IrOp.BLT: "JL", IrOp.BLE: "JLE",
        IrOp.BGT: "JG", IrOp.BGE: "JGE"}
_INVERSE = {"JE": "JNE", "JNE": "JE", "JL": "JGE", "JGE": "JL", "JLE": "JG",
            "JG": "JLE", "JB": "JAE", "JAE": "JB", "JA": "JBE", "JBE": "JA"}
_HOME_LOAD = {IrOp.LDLOC: IrOp.STLOC, IrOp.LDARG: IrOp.STARG}
_SCRATCH = object()


def _imm(o):
    return isinstance(o, int) and not isinstance(o, Reg)


def prologue(frame, used_callee=()):
    code = [TInstr("PUSH", Reg.FP), TInstr("MOV", Reg.FP, Reg.SP)]
    size = 2 * WORD + frame.reserve if frame.saves_callee_regs else frame.reserve
    if size:
        code.append(TInstr("SUB", Reg.SP, size))
    if Reg.R1 in used_callee:
        code.append(TInstr("MOV", Mem(Reg.FP, None, 1, Frame.SAVED_R1), Reg.R1))
    if Reg.R5 in used_callee:
        code.append(TInstr("MOV", Mem(Reg.FP, None, 1, Frame.SAVED_R5), Reg.R5))
    for j in range(frame.local_count):
        code.append(TInstr("MOV", frame.local(j), 0))
    return code


def epilogue(used_callee=()):
    code = []
    if Reg.R1 in used_callee:
        code.append(TInstr("MOV", Reg.R1, Mem(Reg.FP, None, 1, Frame.SAVED_R1)))
    if Reg.R5 in used_callee:
        code.append(TInstr("MOV", Reg.R5, Mem(Reg.FP, None, 1, Frame.SAVED_R5)))
    code += [TInstr("MOV", Reg.SP, Reg.FP), TInstr("POP", Reg.FP), TInstr("RET")]
    return code


def assemble(name, frame, returns_value, head, body, fixups, block_start,
             epi, stubs, used_callee=(), probes=None):
    """Lay out prologue, body, shared epilogue and trap stubs, then patch
    every recorded branch in a single pass."""
    for ins in head:
        ins.block = "prologue"
    base = len(head)
    code = head + body
    epi_at = len(code)
    for ins in epi:
        ins.block = "epilogue"
    code += epi
    stub_at = {}
    for tc in stubs:
        stub_at[tc] = len(code)
        code.append(TInstr("TRAPSTUB", stub=tc, block="stub"))
    starts = {b: base + k for b, k in block_start.items()}
    for k, target in fixups:
        kind = target[0]
        if kind == "block":
            pos = starts[target[1]]
        elif kind == "epi":
            pos = epi_at
        else:
            pos = stub_at[target[1]]
        code[base + k].target = pos
    for ins in code:
        if ins.mnem.startswith("J") and not isinstance(ins.target, int):
            raise CompilerBug(f"{name}: unresolved branch {ins!r}")
    mc = MethodCode(name, code, frame, returns_value, starts)
    if probes is not None:
        mc.probes = {}
        for k, kind, payload in probes:
            mc.probes.setdefault(base + k, []).append((kind, payload))
    return mc


class _BlockGen:
    """Per-method generator; register state is reset at each block."""

    def __init__(self, ddg, frame, probes=False):
        self.ddg = ddg
        self.probes = [] if probes else None
        self.opts = ddg.options
        self.frame = frame
        self.code = []
        self.fixups = []
        self.block_start = {}
        self.stubs = []
        self.peak_spill = 0
        self.used_callee = set()
        self.block = None

    # -- emission ----------------------------------------------------------

    def emit(self, mnem, dst=None, src=None, target=None):
        ins = TInstr(mnem, dst, src, block=self.block)
        if target is not None:
            self.fixups.append((len(self.code), target))
            ins.target = target
        self.code.append(ins)
        return ins

    def stub(self, code):
        code = TrapCode(code)
        if code not in self.stubs:
            self.stubs.append(code)
        return ("stub", code)

    # -- register state ----------------------------------------------------

    def reset(self):
        self.free = list(ALLOC_ORDER)
        self.occ = []
        self.owner = {}
        self.uses = {}
        self.spills = []
        self.pinned = set()
        self.scratch = []

    def occupy(self, r, node):
        if r in self.free:
            self.free.remove(r)
        elif r in self.occ:
            self.occ.remove(r)
        self.occ.append(r)
        self.owner[r] = node
        if r in CALLEE_SAVED:
            self.used_callee.add(r)
        if node is not _SCRATCH:
            node.md = ("reg", r)

    def release_reg(self, r):
        self.occ.remove(r)
        del self.owner[r]
        self.free.insert(0, r)

    def push_spill(self, node):
        k = len(self.spills)
        self.spills.append(node)
        self.peak_spill = max(self.peak_spill, len(self.spills))
        return k

    def free_slot(self, k):
        self.spills[k] = None
        while self.spills and self.spills[-1] is None:
            self.spills.pop()

    def spill(self, r):
        node = self.owner[r]
        if node is _SCRATCH:
            raise CompilerBug("spilling a scratch register")
        k = self.push_spill(node)
        self.emit("MOV", self.frame.spill(k), r)
        node.md = ("spill", k)
        self.release_reg(r)

    def alloc(self, prefer=None, avoid=()):
        """Pick a register: the preferred one if free, else the most recently
        released, else spill the least recently occupied."""
        avoid = set(avoid) | self.pinned
        if prefer is not None and prefer in self.free and prefer not in avoid:
            return prefer
        for r in self.free:
            if r not in avoid:
                return r
        for r in self.occ:
            if r not in avoid:
                self.spill(r)
                return r
        raise CompilerBug("register allocation deadlock")

    def evict(self, r, avoid=()):
        """Make ``r`` free, moving its value to another register or a slot."""
        node = self.owner.get(r)
        if node is None:
            return
        avoid = set(avoid) | self.pinned | {r}
        for r2 in self.free:
            if r2 not in avoid:
                self.emit("MOV", r2, r)
                self.release_reg(r)
                self.occupy(r2, node)
                return
        self.spill(r)

    def pin(self, r):
        self.pinned.add(r)
        return r

    # -- values ------------------------------------------------------------

    def produce(self, node):
        self.uses[node] = node.counter
        if node.counter == 0:
            self.release(node)

    def consume(self, node):
        n = self.uses[node] - 1
        self.uses[node] = n
        if n == 0:
            self.release(node)
        elif n < 0:
            raise CompilerBug(f"{node!r} consumed more often than counted")

    def release(self, node):
        loc = node.md
        if loc is None:
            return
        kind = loc[0]
        if kind == "reg":
            if self.owner.get(loc[1]) is node:
                self.release_reg(loc[1])
        elif kind == "spill":
            self.free_slot(loc[1])
        elif kind == "elem":
            for x in node.ins:
                self.consume(x)
        node.md = ("dead",)

    def is_imm(self, node):
        return node.md[0] == "imm"

    def is_memlike(self, node):
        return node.md[0] in ("mem", "spill", "elem")

    def home(self, op, arg):
        if op in (IrOp.LDLOC, IrOp.STLOC):
            return self.frame.local(arg)
        if op in (IrOp.LDARG, IrOp.STARG):
            return self.frame.arg(arg)
        return self.frame.temp(arg)

    def elem_mem(self, node):
        ref, idx = node.ins[0], node.ins[1]
        rb = self.to_reg(ref)
        if self.is_imm(idx):
            return Mem(rb, None, 1, WORD + WORD * idx.md[1])
        ri = self.to_reg(idx)
        return Mem(rb, ri, WORD, WORD)

    def operand(self, node, allow_mem=True):
        loc = node.md
        kind = loc[0]
        if kind == "reg":
            return self.pin(loc[1])
        if kind == "imm":
            return loc[1]
        if not allow_mem:
            return self.to_reg(node)
        if kind == "mem":
            return loc[1]
        if kind == "spill":
            return self.frame.spill(loc[1])
        if kind == "elem":
            return self.elem_mem(node)
        raise CompilerBug(f"{node!r} has no location ({loc})")

    def to_reg(self, node, prefer=None, avoid=()):
        """A register holding the node's value. Spilled values are reloaded
        into a register the node then owns; constants and folded memory
        operands go through a scratch register released after the current
        instruction."""
        loc = node.md
        kind = loc[0]
        if kind == "reg" and loc[1] not in avoid:
            return self.pin(loc[1])
        if kind == "reg":
            r = self.alloc(prefer, avoid)
            self.emit("MOV", r, loc[1])
            self.release_reg(loc[1])
            self.occupy(r, node)
            return self.pin(r)
        if kind == "spill":
            r = self.alloc(prefer, avoid)
            self.emit("MOV", r, self.frame.spill(loc[1]))
            self.free_slot(loc[1])
            self.occupy(r, node)
            return self.pin(r)
        src = self.operand(node)
        r = self.alloc(prefer, avoid)
        self.emit("MOV", r, src)
        self.occupy(r, _SCRATCH)
        self.scratch.append(r)
        return self.pin(r)

    def dest_for(self, node, a, avoid=()):
        """Two-address destination holding input #1. A register whose value
        dies here is taken over; otherwise the value is copied so the live
        original survives."""
        loc = a.md
        prefer = self.prefer.get(node)
        if loc[0] == "reg" and self.uses[a] == 1 and loc[1] not in avoid:
            r = loc[1]
            self.owner[r] = node
            self.occ.remove(r)
            self.occ.append(r)
            node.md = ("reg", r)
            a.md = ("moved",)
            return self.pin(r)
        src = self.operand(a)
        r = self.alloc(prefer, avoid)
        self.emit("MOV", r, src)
        self.occupy(r, node)
        return self.pin(r)

    def result_reg(self, node, avoid=()):
        r = self.alloc(self.prefer.get(node), avoid)
        return r

    # -- generation ----------------------------------------------------------

    def run(self, order):
        for k, bid in enumerate(order):
            nxt = order[k + 1] if k + 1 < len(order) else None
            self.gen_block(self.ddg.blocks[bid], nxt)

    def gen_block(self, blk, nxt):
        self.reset()
        self.block = blk.id
        self.next_block = nxt
        self.block_start[blk.id] = len(self.code)
        if self.probes is not None:
            self.probes.append((len(self.code), "enter", None))
        self.prefer = {}
        for n in blk:
            if n.op in (IrOp.DIV, IrOp.REM):
                self.prefer.setdefault(n.ins[0], Reg.R0)
            elif n.op in _SHIFTS:
                self.prefer.setdefault(n.ins[1], Reg.R2)
            elif n.op is IrOp.RET and n.ins:
                self.prefer.setdefault(n.ins[0], Reg.R0)
        for n in blk:
            n.md = None
        for n in blk:
            self.pinned = set()
            go_on = self.gen_node(n)
            for r in self.scratch:
                self.release_reg(r)
            self.scratch = []
            if go_on is False:
                break
            if self.probes is not None:
                self.record_probe()
            if (n.store_target is not None and not n.store_target.removed
                    and n.store_target.md is None):
                self.pinned = set()
                self.early_store(n.store_target)
        if not blk.trapped and (self.occ or self.spills):
            raise CompilerBug(f"B{blk.id}: values live at block end: "
                              f"{[self.owner[r] for r in self.occ]} {self.spills}")

    def record_probe(self):
        claims = [(int(r), self.owner[r].id) for r in self.occ
                  if self.owner[r] is not _SCRATCH]
        claims += [(self.frame.spill(k).disp, n.id)
                   for k, n in enumerate(self.spills) if n is not None]
        if claims:
            self.probes.append((len(self.code), "hold", claims))

    def jump(self, bid):
        if bid != self.next_block:
            self.emit("JMP", target=("block", bid))

    def gen_node(self, n):
        op = n.op
        if op is IrOp.CONST:
            n.md = ("imm", n.arg)
            self.produce(n)
        elif op in (IrOp.LDLOC, IrOp.LDARG):
            if n.embeddable and self.opts.embed:
                n.md = ("mem", self.home(op, n.arg))
                self.produce(n)
            else:
                self.gen_load(n, self.home(op, n.arg))
        elif op is IrOp.LDTMP:
            self.gen_load(n, self.frame.temp(n.arg))
        elif op in (IrOp.STLOC, IrOp.STARG, IrOp.STTMP):
            if n.md is None:
                self.gen_store(n)
        elif op in (IrOp.DIV, IrOp.REM):
            self.gen_div(n)
        elif op in _SHIFTS and not self.is_imm(n.ins[1]):
            self.gen_shift(n)
        elif op in _MNEM and len(n.ins) == 2:
            self.gen_binary(n)
        elif op in (IrOp.NEG, IrOp.NOT):
            a = n.ins[0]
            if self.memdest_ok(n, a):
                self.emit(_MNEM[op], a.md[1])
                self.finish_memdest(n, (a,))
            else:
                dst = self.dest_for(n, a)
                self.emit(_MNEM[op], dst)
                self.consume(a)
                self.produce(n)
        elif op is IrOp.BR:
            self.jump(n.arg)
            return False
        elif op in COND_BRANCHES:
            self.gen_cond_branch(n)
            return False
        elif op is IrOp.SWITCH:
            x = n.ins[0]
            o = self.operand(x)
            if _imm(o):
                o = self.to_reg(x)
            cases, fall = n.arg
            for k, b in enumerate(cases):
                self.emit("CMP", o, k)
                self.emit("JE", target=("block", b))
            self.consume(x)
            self.jump(fall)
            return False
        elif op is IrOp.RET:
            if n.ins:
                v = n.ins[0]
                o = self.operand(v)
                if not (isinstance(o, Reg) and o is Reg.R0):
                    self.emit("MOV", Reg.R0, o)
                self.consume(v)
            if self.next_block is not None:
                self.emit("JMP", target=("epi",))
            return False
        elif op is IrOp.CALL:
            self.gen_call(n)
        elif op is IrOp.NEWARR:
            x = n.ins[0]
            src = self.operand(x)
            r = self.result_reg(n)
            self.emit("ALLOC", r, src)
            self.consume(x)
            self.occupy(r, n)
            self.produce(n)
        elif op is IrOp.LDLEN:
            ref = n.ins[0]
            rb = self.to_reg(ref)
            if self.uses[ref] == 1 and ref.md == ("reg", rb):
                dst = self.dest_for(n, ref)
            else:
                dst = self.result_reg(n)
                self.occupy(dst, n)
            self.emit("MOV", dst, Mem(rb))
            self.consume(ref)
            self.produce(n)
        elif op is IrOp.CHKNULL:
            ref = n.ins[0]
            o = self.operand(ref)
            if _imm(o):
                o = self.to_reg(ref)
            self.emit("CMP", o, 0)
            self.emit("JE", target=self.stub(TrapCode.NULL_REF))
            self.consume(ref)
        elif op is IrOp.CHKIDX:
            ref, idx = n.ins
            rb = self.to_reg(ref)
            if self.is_imm(idx):
                self.emit("CMP", Mem(rb), idx.md[1])
                self.emit("JBE", target=self.stub(TrapCode.INDEX_RANGE))
            else:
                ri = self.to_reg(idx)
                self.emit("CMP", ri, Mem(rb))
                self.emit("JAE", target=self.stub(TrapCode.INDEX_RANGE))
            self.consume(ref)
            self.consume(idx)
        elif op is IrOp.LDELEM_ADDR:
            if n.embeddable and self.opts.embed:
                n.md = ("elem",)
                self.produce(n)
            else:
                mem = self.elem_mem(n)
                r = self.result_reg(n)
                self.emit("MOV", r, mem)
                for x in n.ins:
                    self.consume(x)
                self.occupy(r, n)
                self.produce(n)
        elif op is IrOp.STELEM_ADDR:
            ref, idx, val = n.ins
            v = self.operand(val, allow_mem=False)
            mem = self.elem_mem(n)
            self.emit("MOV", mem, v)
            for x in n.ins:
                self.consume(x)
        elif op is IrOp.THROWTRAP:
            self.emit("JMP", target=self.stub(n.arg))
            return False
        else:
            raise CompilerBug(f"no code generation rule for {op}")
        return True

    def gen_load(self, n, mem):
        r = self.result_reg(n)
        self.emit("MOV", r, mem)
        self.occupy(r, n)
        self.produce(n)

    def gen_store(self, s):
        val = s.ins[0]
        v = self.operand(val, allow_mem=False)
        self.emit("MOV", self.home(s.op, s.arg), v)
        self.consume(val)
        s.md = ("done",)

    def early_store(self, s):
        """Issue an embedded store right after its producer."""
        if s.ins[0].md[0] == "dead":
            raise CompilerBug(f"{s!r}: producer died before its store")
        self.gen_store(s)
        for r in self.scratch:
            self.release_reg(r)
        self.scratch = []

    def memdest_ok(self, n, x):
        if not self.opts.embed or x.md is None or x.md[0] != "mem":
            return False
        s = n.store_target
        return (s is not None and not s.removed and s.md is None
                and _HOME_LOAD.get(x.op) is s.op and s.arg == x.arg
                and n.counter == 1)

    def finish_memdest(self, n, inputs):
        for x in inputs:
            self.consume(x)
        n.store_target.md = ("done",)
        self.uses[n] = 0
        n.md = ("dead",)

    def gen_binary(self, n):
        a, b = n.ins
        mnem = _MNEM[n.op]
        comm = n.op.value.lower() in COMMUTATIVE
        if self.is_imm(a) and not self.is_imm(b) and comm:
            a, b = b, a
        if self.memdest_ok(n, a):
            src = self.operand(b, allow_mem=False)
            self.emit(mnem, a.md[1], src)
            self.finish_memdest(n, (a, b))
            return
        if comm and not self.is_imm(b) and self.memdest_ok(n, b):
            src = self.operand(a, allow_mem=False)
            self.emit(mnem, b.md[1], src)
            self.finish_memdest(n, (b, a))
            return
        if (comm and self.is_memlike(a) and not self.is_memlike(b)
                and not self.is_imm(b)):
            a, b = b, a
        src = self.operand(b)
        dst = self.dest_for(n, a)
        self.emit(mnem, dst, src)
        self.consume(a)
        self.consume(b)
        self.produce(n)

    def gen_shift(self, n):
        a, b = n.ins
        if not (b.md[0] == "reg" and b.md[1] is Reg.R2):
            self.evict(Reg.R2)
            src = self.operand(b)
            self.emit("MOV", Reg.R2, src)
            self.occupy(Reg.R2, _SCRATCH)
            self.scratch.append(Reg.R2)
        self.pin(Reg.R2)
        dst = self.dest_for(n, a, avoid={Reg.R2})
        self.emit(_MNEM[n.op], dst, Reg.R2)
        self.consume(a)
        self.consume(b)
        self.produce(n)

    def gen_div(self, n):
        a, b = n.ins
        self.pinned.discard(Reg.R0)
        self.pinned.discard(Reg.R3)
        if self.owner.get(Reg.R3) is not None:
            self.evict(Reg.R3, avoid={Reg.R0})
        a_loc = a.md
        if a_loc[0] == "reg" and a_loc[1] is Reg.R0 and self.uses[a] == 1:
            self.occupy(Reg.R0, n)
            a.md = ("moved",)
        else:
            holder = self.owner.get(Reg.R0)
            if holder is not None:
                self.evict(Reg.R0, avoid={Reg.R3})
            if holder is not a:
                self.emit("MOV", Reg.R0, self.operand(a))
            self.occupy(Reg.R0, n)
        self.pin(Reg.R0)
        self.pin(Reg.R3)
        if self.is_imm(b):
            src = self.to_reg(b, avoid={Reg.R0, Reg.R3})
        else:
            src = self.operand(b)
        # R3 is clobbered by the remainder; keep it out of the free list.
        if Reg.R3 in self.free:
            self.occupy(Reg.R3, _SCRATCH)
            self.scratch.append(Reg.R3)
        self.emit("DIV", src)
        self.consume(a)
        self.consume(b)
        if n.op is IrOp.REM:
            self.scratch.remove(Reg.R3)
            self.owner[Reg.R3] = n
            n.md = ("reg", Reg.R3)
            self.release_reg(Reg.R0)
        self.produce(n)

    def gen_cond_branch(self, n):
        taken, fall = n.arg
        if n.op in (IrOp.BRTRUE, IrOp.BRFALSE):
            x = n.ins[0]
            o = self.operand(x)
            if _imm(o):
                o = self.to_reg(x)
            self.emit("CMP", o, 0)
            cc = "JNE" if n.op is IrOp.BRTRUE else "JE"
            self.consume(x)
        else:
            a, b = n.ins
            cc = _JCC[n.op]
            if self.is_imm(a) and not self.is_imm(b):
                a, b = b, a
                cc = SWAPPED[cc]
            oa = self.operand(a)
            if _imm(oa):
                oa = self.to_reg(a)
            ob = self.operand(b, allow_mem=not isinstance(oa, Mem))
            self.emit("CMP", oa, ob)
            self.consume(a)
            self.consume(b)
        if taken == self.next_block and fall != self.next_block:
            self.emit(_INVERSE[cc], target=("block", fall))
        else:
            self.emit(cc, target=("block", taken))
            self.jump(fall)

    def gen_call(self, n):
        for x in n.ins:
            self.emit("PUSH", self.operand(x))
            for r in self.scratch:
                self.release_reg(r)
            self.scratch = []
            self.pinned = set()
        for x in n.ins:
            self.consume(x)
        for r in CALLER_SAVED:
            if self.owner.get(r) is not None:
                self.evict(r, avoid=CALLER_SAVED)
        self.emit("CALL", target=None).target = n.arg
        if n.ins:
            self.emit("ADD", Reg.SP, WORD * len(n.ins))
        if n.type is not None:
            self.occupy(Reg.R0, n)
            self.produce(n)


def generate(ddg, cfg=None, probes=False):
    """Compile one method's DAGs into target code. With ``probes`` the
    allocator's register/slot claims are recorded for checked execution."""
    m = ddg.method
    frame = Frame(m.arg_count, m.local_count, ddg.temp_zone_slots)
    g = _BlockGen(ddg, frame, probes)
    order = sorted(ddg.blocks)
    g.run(order)
    frame.spill_slots = g.peak_spill
    used = sorted(g.used_callee)
    head = prologue(frame, used)
    return assemble(m.name, frame, m.returns_value, head, g.code, g.fixups,
                    g.block_start, epilogue(used), g.stubs, used, g.probes)
