"""Data-dependence DAG construction with local optimizations.

Each reachable block is translated once, in reverse postorder, by simulating
the IL operand stack with links to IR nodes. Optimizations happen while nodes
are issued: constant folding and algebraic simplification, load forwarding
and dead-store removal through per-block variable repositories, usage-counter
dead-code elimination, and marking of loads/stores the code generator may fold
into memory operands. Values left on the stack at a block boundary travel
through frame temporaries (STTMP/LDTMP).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from . import semantics
from .il import BINARY_OPS, COMPARE_BRANCHES, UNARY_OPS, CompilerBug, Op
from .options import DEFAULT
from .semantics import TrapCode

STORE_WINDOW = 8


class IrOp(str, enum.Enum):
    CONST = "CONST"
    LDLOC = "LDLOC"
    STLOC = "STLOC"
    LDARG = "LDARG"
    STARG = "STARG"
    ADD = "ADD"
    SUB = "SUB"
    MUL = "MUL"
    DIV = "DIV"
    REM = "REM"
    AND = "AND"
    OR = "OR"
    XOR = "XOR"
    SHL = "SHL"
    SHR = "SHR"
    SHRU = "SHRU"
    NEG = "NEG"
    NOT = "NOT"
    BR = "BR"
    BEQ = "BEQ"
    BNE = "BNE"
    BLT = "BLT"
    BLE = "BLE"
    BGT = "BGT"
    BGE = "BGE"
    BRTRUE = "BRTRUE"
    BRFALSE = "BRFALSE"
    SWITCH = "SWITCH"
    RET = "RET"
    CALL = "CALL"
    NEWARR = "NEWARR"
    LDLEN = "LDLEN"
    CHKNULL = "CHKNULL"
    CHKIDX = "CHKIDX"
    LDELEM_ADDR = "LDELEM_ADDR"
    STELEM_ADDR = "STELEM_ADDR"
    STTMP = "STTMP"
    LDTMP = "LDTMP"
    THROWTRAP = "THROWTRAP"

    def __str__(self):
        return self.value


ALU = frozenset({IrOp.ADD, IrOp.SUB, IrOp.MUL, IrOp.DIV, IrOp.REM, IrOp.AND,
                 IrOp.OR, IrOp.XOR, IrOp.SHL, IrOp.SHR, IrOp.SHRU})
UNARY = frozenset({IrOp.NEG, IrOp.NOT})
COND_BRANCHES = frozenset({IrOp.BEQ, IrOp.BNE, IrOp.BLT, IrOp.BLE, IrOp.BGT,
                           IrOp.BGE, IrOp.BRTRUE, IrOp.BRFALSE})
LOADS = {IrOp.LDLOC: "loc", IrOp.LDARG: "arg", IrOp.LDTMP: "tmp"}
STORES = {IrOp.STLOC: "loc", IrOp.STARG: "arg", IrOp.STTMP: "tmp"}
_LOAD_OF = {"loc": IrOp.LDLOC, "arg": IrOp.LDARG, "tmp": IrOp.LDTMP}
_STORE_OF = {"loc": IrOp.STLOC, "arg": IrOp.STARG, "tmp": IrOp.STTMP}
EMBEDDABLE_LOADS = frozenset({IrOp.LDLOC, IrOp.LDARG, IrOp.LDELEM_ADDR})
THROWING = frozenset({IrOp.DIV, IrOp.REM, IrOp.CALL, IrOp.NEWARR, IrOp.CHKNULL,
                      IrOp.CHKIDX, IrOp.THROWTRAP})

_IL_TO_IR = {op: IrOp[op.name] for op in BINARY_OPS | UNARY_OPS | COMPARE_BRANCHES}
_IL_TO_IR[Op.BRTRUE] = IrOp.BRTRUE
_IL_TO_IR[Op.BRFALSE] = IrOp.BRFALSE


class Node:
    """One IR instruction: a DAG node that is also linked into its block's
    program-order list."""

    __slots__ = ("id", "op", "arg", "ins", "type", "throws", "embeddable",
                 "store_target", "bb", "prev", "next", "counter", "md",
                 "removed", "offset", "after_trap", "epoch")

    def __init__(self, id, op, arg, ins, typ, bb, offset):
        self.id = id
        self.op = op
        self.arg = arg
        self.ins = ins
        self.type = typ
        self.throws = op in THROWING
        self.embeddable = False
        self.store_target = None
        self.bb = bb
        self.prev = None
        self.next = None
        self.counter = 1
        self.md = None
        self.removed = False
        self.offset = offset
        self.after_trap = False
        self.epoch = 0

    @property
    def is_value(self):
        return self.type is not None

    def __repr__(self):
        return f"n{self.id}:{self.op.value}"


class BlockIR:
    """Program-order list of IR nodes for one basic block."""

    def __init__(self, block_id):
        self.id = block_id
        self.head = None
        self.tail = None
        self.entry_residue = 0
        self.exit_residue = 0
        self.trapped = False

    def __iter__(self):
        n = self.head
        while n is not None:
            yield n
            n = n.next

    def append(self, node):
        node.prev = self.tail
        if self.tail is None:
            self.head = node
        else:
            self.tail.next = node
        self.tail = node

    def insert_after(self, anchor, node):
        if anchor is None:
            node.prev, node.next = None, self.head
            if self.head is not None:
                self.head.prev = node
            self.head = node
            if self.tail is None:
                self.tail = node
            return
        node.prev, node.next = anchor, anchor.next
        if anchor.next is not None:
            anchor.next.prev = node
        else:
            self.tail = node
        anchor.next = node

    def unlink(self, node):
        if node.prev is None:
            self.head = node.next
        else:
            node.prev.next = node.next
        if node.next is None:
            self.tail = node.prev
        else:
            node.next.prev = node.prev
        node.prev = node.next = None


@dataclass
class DdgMethod:
    method: object
    blocks: Dict[int, BlockIR]         # reachable real blocks
    order: List[int]                   # translation order (rpo)
    temp_zone_slots: int = 0
    node_count: int = 0
    options: object = DEFAULT
    nodes: List[Node] = field(default_factory=list, repr=False)

    def live_nodes(self):
        for bid in sorted(self.blocks):
            yield from self.blocks[bid]


class _Translator:
    def __init__(self, m, cfg, numbering, depths, unit, options):
        self.m = m
        self.cfg = cfg
        self.numbering = numbering
        self.depths = depths
        self.unit = unit
        self.opts = options
        self.block_of = {b.leader: b.id for b in cfg.blocks}
        self.nodes = []

    # -- node plumbing -----------------------------------------------------

    def new(self, op, arg=None, ins=(), typ=None):
        node = Node(len(self.nodes), op, arg, list(ins), typ, self.cur.id,
                    self.offset)
        node.epoch = self.epoch
        node.after_trap = self.cur.trapped
        self.nodes.append(node)
        return node

    def emit(self, op, arg=None, ins=(), typ=None):
        node = self.new(op, arg, ins, typ)
        self.cur.append(node)
        for x in node.ins:
            if x.op in EMBEDDABLE_LOADS:
                self.mark_embeddable_load(node, x)
        return node

    def push(self, node):
        self.stack.append(node)

    def pop(self):
        if not self.stack:
            raise CompilerBug(f"{self.m.name}@{self.offset}: virtual stack underflow")
        return self.stack.pop()

    def addref(self, node, k=1):
        node.counter += k
        if node.counter > 1:
            node.embeddable = False

    def release(self, node):
        node.counter -= 1
        if node.counter == 0:
            self.eliminate_dead(node)

    def eliminate_dead(self, node):
        if not self.opts.dce:
            return
        work = [node]
        while work:
            x = work.pop()
            if x.removed or x.counter != 0 or not x.is_value:
                continue
            if x.throws or x.op is IrOp.CALL:
                continue
            self.cur.unlink(x)
            x.removed = True
            self._forget(x)
            for y in x.ins:
                y.counter -= 1
                if y.counter == 0:
                    work.append(y)

    def _forget(self, x):
        kind = LOADS.get(x.op)
        if kind == "loc" and self.loc_repo[x.arg] is x:
            self.loc_repo[x.arg] = None
        elif kind == "arg" and self.arg_repo[x.arg] is x:
            self.arg_repo[x.arg] = None

    def _repo(self, kind):
        return self.loc_repo if kind == "loc" else self.arg_repo

    # -- optimizations -----------------------------------------------------

    def mark_embeddable_load(self, consumer, operand):
        if not self.opts.embed or operand.counter != 1:
            return
        kind = LOADS.get(operand.op)
        if kind is not None:
            if self._repo(kind)[operand.arg] is not operand:
                return
        elif operand.epoch != self.epoch:
            # An array store or call may have changed the element.
            return
        operand.embeddable = True

    def mark_store_embeddable(self, store):
        if not self.opts.embed:
            return
        producer = store.ins[0]
        if producer.store_target is not None or producer.bb != store.bb:
            return
        kind = STORES[store.op]
        load_op, store_op = _LOAD_OF[kind], _STORE_OF[kind]
        idx = store.arg
        steps = 0
        w = store.prev
        while w is not None and w is not producer:
            if steps == STORE_WINDOW:
                return
            if (w.op is load_op or w.op is store_op) and w.arg == idx:
                return
            # An embedded load of the variable is read at its consumer.
            for y in w.ins:
                if y.op is load_op and y.arg == idx:
                    return
            steps += 1
            w = w.prev
        if w is None:
            return
        producer.store_target = store
        store.embeddable = True

    def repo_load(self, kind, idx):
        repo = self._repo(kind)
        line = repo[idx]
        if self.opts.repo and line is not None:
            target = line if line.op in LOADS else line.ins[0]
            self.addref(target)
            return target
        node = self.emit(_LOAD_OF[kind], idx, typ="int32")
        repo[idx] = node
        return node

    def repo_store(self, kind, idx, value):
        repo = self._repo(kind)
        prev = repo[idx]
        if self.opts.repo and prev is not None and prev.op in STORES:
            # Every load since the earlier store was forwarded: it is dead.
            self.cur.unlink(prev)
            prev.removed = True
            producer = prev.ins[0]
            if producer.store_target is prev:
                producer.store_target = None
            self.release(producer)
        node = self.emit(_STORE_OF[kind], idx, [value])
        repo[idx] = node
        self.mark_store_embeddable(node)
        return node

    def fold_constants(self, op, ins):
        if not self.opts.fold:
            return None
        if len(ins) == 1:
            a = ins[0]
            if a.op is IrOp.CONST:
                v = semantics.unary(op.value.lower(), a.arg)
                self.release(a)
                return self.emit(IrOp.CONST, v, typ="int32")
            return None
        a, b = ins
        name = op.value.lower()
        if a.op is IrOp.CONST and b.op is IrOp.CONST:
            try:
                v = semantics.binary(name, a.arg, b.arg)
            except semantics.Trap as t:
                return self._trap(t.code, (a, b))
            self.release(a)
            self.release(b)
            return self.emit(IrOp.CONST, v, typ="int32")
        if op in (IrOp.DIV, IrOp.REM) and b.op is IrOp.CONST and b.arg == 0:
            return self._trap(TrapCode.DIV_ZERO, (a, b))
        if b.op is IrOp.CONST:
            x, c, k = a, b, b.arg
        elif a.op is IrOp.CONST and name in semantics.COMMUTATIVE:
            x, c, k = b, a, a.arg
        else:
            return None
        identity = (
            (op is IrOp.ADD and k == 0)
            or (op is IrOp.SUB and k == 0)
            or (op is IrOp.MUL and k == 1)
            or (op is IrOp.DIV and k == 1)
            or (op is IrOp.AND and k == -1)
            or (op in (IrOp.OR, IrOp.XOR) and k == 0)
            or (op in (IrOp.SHL, IrOp.SHR, IrOp.SHRU) and k & 31 == 0)
        )
        if identity:
            self.release(c)
            return x
        absorbing = {IrOp.MUL: (0, 0), IrOp.AND: (0, 0), IrOp.OR: (-1, -1)}
        if op in absorbing and k == absorbing[op][0]:
            self.release(x)
            self.release(c)
            return self.emit(IrOp.CONST, absorbing[op][1], typ="int32")
        return None

    def _trap(self, code, operands):
        for x in operands:
            self.release(x)
        self.emit(IrOp.THROWTRAP, TrapCode(code))
        self.cur.trapped = True
        # The rest of the block is dead; keep translating over a placeholder.
        return self.emit(IrOp.CONST, 0, typ="int32")

    # -- translation -------------------------------------------------------

    def run(self):
        blocks = {}
        order = []
        temp_slots = 0
        for bid in self.numbering.rpo:
            blk = self.cfg.blocks[bid]
            if blk.virtual:
                continue
            ir = self.translate_block(blk)
            blocks[bid] = ir
            order.append(bid)
            temp_slots = max(temp_slots, ir.exit_residue)
        return blocks, order, temp_slots

    def translate_block(self, blk):
        self.cur = BlockIR(blk.id)
        self.stack = []
        self.loc_repo = [None] * self.m.local_count
        self.arg_repo = [None] * self.m.arg_count
        self.epoch = 0
        self.offset = blk.leader
        residue = self.depths[blk.leader]
        if residue is None:
            raise CompilerBug(f"{self.m.name}: block B{blk.id} has no stack depth")
        self.cur.entry_residue = residue
        self.head = [self.emit(IrOp.LDTMP, i, typ="int32") for i in range(residue)]
        self.stack = list(self.head)
        for self.offset in range(blk.leader, blk.end):
            self.translate(self.m.body[self.offset])
        self.offset = blk.end
        self.adapt_block_exit(blk)
        return self.cur

    def fallthrough(self):
        return self.block_of[self.offset + 1]

    def translate(self, ins):
        op = ins.op
        if op is Op.LDC:
            self.push(self.emit(IrOp.CONST, ins.arg, typ="int32"))
        elif op is Op.LDLOC:
            self.push(self.repo_load("loc", ins.arg))
        elif op is Op.LDARG:
            self.push(self.repo_load("arg", ins.arg))
        elif op is Op.STLOC:
            self.repo_store("loc", ins.arg, self.pop())
        elif op is Op.STARG:
            self.repo_store("arg", ins.arg, self.pop())
        elif op in BINARY_OPS:
            b = self.pop()
            a = self.pop()
            irop = _IL_TO_IR[op]
            r = self.fold_constants(irop, (a, b))
            if r is None:
                r = self.emit(irop, None, (a, b), "int32")
            self.push(r)
        elif op in UNARY_OPS:
            a = self.pop()
            irop = _IL_TO_IR[op]
            r = self.fold_constants(irop, (a,))
            if r is None:
                r = self.emit(irop, None, (a,), "int32")
            self.push(r)
        elif op is Op.DUP:
            x = self.stack[-1]
            self.addref(x)
            self.push(x)
        elif op is Op.POP:
            self.release(self.pop())
        elif op in (Op.BR, Op.LEAVE):
            self.emit(IrOp.BR, self.block_of[ins.arg])
        elif op in COMPARE_BRANCHES:
            b = self.pop()
            a = self.pop()
            self.emit(_IL_TO_IR[op], (self.block_of[ins.arg], self.fallthrough()),
                      (a, b))
        elif op in (Op.BRTRUE, Op.BRFALSE):
            a = self.pop()
            self.emit(_IL_TO_IR[op], (self.block_of[ins.arg], self.fallthrough()),
                      (a,))
        elif op is Op.SWITCH:
            a = self.pop()
            cases = tuple(self.block_of[t] for t in ins.arg)
            self.emit(IrOp.SWITCH, (cases, self.fallthrough()), (a,))
        elif op is Op.RET:
            self.emit(IrOp.RET, None, (self.pop(),) if self.m.returns_value else ())
        elif op is Op.CALL:
            callee = self.unit[ins.arg]
            args = [self.pop() for _ in range(callee.arg_count)][::-1]
            node = self.emit(IrOp.CALL, ins.arg, args,
                             "int32" if callee.returns_value else None)
            self.epoch += 1
            if callee.returns_value:
                self.push(node)
        elif op is Op.NEWARR:
            self.push(self.emit(IrOp.NEWARR, None, (self.pop(),), "arrayref"))
        elif op is Op.LDLEN:
            ref = self.pop()
            self.addref(ref)
            self.emit(IrOp.CHKNULL, None, (ref,))
            self.push(self.emit(IrOp.LDLEN, None, (ref,), "int32"))
        elif op is Op.LDELEM:
            idx = self.pop()
            ref = self.pop()
            self.addref(ref, 2)
            self.addref(idx, 1)
            self.emit(IrOp.CHKNULL, None, (ref,))
            self.emit(IrOp.CHKIDX, None, (ref, idx))
            self.push(self.emit(IrOp.LDELEM_ADDR, None, (ref, idx), "int32"))
        elif op is Op.STELEM:
            val = self.pop()
            idx = self.pop()
            ref = self.pop()
            self.addref(ref, 2)
            self.addref(idx, 1)
            self.emit(IrOp.CHKNULL, None, (ref,))
            self.emit(IrOp.CHKIDX, None, (ref, idx))
            self.emit(IrOp.STELEM_ADDR, None, (ref, idx, val))
            self.epoch += 1
        elif op is Op.TRAP:
            self.emit(IrOp.THROWTRAP, ins.arg)
            self.cur.trapped = True
        else:
            raise CompilerBug(f"untranslatable opcode {op}")

    def adapt_block_exit(self, blk):
        real_succs = [s for s in blk.successors if s != self.cfg.last_block]
        if self.cur.trapped or not real_succs:
            while self.stack:
                self.release(self.stack.pop())
            return
        for s in real_succs:
            want = self.depths[self.cfg.blocks[s].leader]
            if want != len(self.stack):
                raise CompilerBug(f"{self.m.name}: residue {len(self.stack)} "
                                  f"leaving B{blk.id}, B{s} expects {want}")
        self.cur.exit_residue = len(self.stack)
        live_head = [x for x in self.head if not x.removed]
        for i, p in enumerate(self.stack):
            if p.op is IrOp.LDTMP and p.arg == i and p.bb == blk.id:
                # The value never left its temporary.
                self.release(p)
                continue
            s = self.new(IrOp.STTMP, i, (p,))
            anchor = live_head[-1] if p.op is IrOp.LDTMP else p
            self.cur.insert_after(anchor, s)
            if p.op in EMBEDDABLE_LOADS:
                self.mark_embeddable_load(s, p)
            self.mark_store_embeddable(s)
        self.stack = []


def translate_method(m, cfg, numbering, depths=None, unit=None, options=DEFAULT):
    from .il import unit_index, validate

    unit = unit_index(unit if unit is not None else [m])
    if m.name not in unit:
        unit = dict(unit)
        unit[m.name] = m
    if depths is None:
        depths = validate(m, unit)
    t = _Translator(m, cfg, numbering, depths, unit, options)
    blocks, order, temps = t.run()
    return DdgMethod(m, blocks, order, temps, len(t.nodes), options, t.nodes)


# -- audits ------------------------------------------------------------------

def audit_counters(ddg):
    """Recount every live node's uses; returns the mismatches."""
    links = {}
    live = list(ddg.live_nodes())
    for n in live:
        for x in n.ins:
            links[x.id] = links.get(x.id, 0) + 1
    bad = []
    for n in live:
        expected = links.get(n.id, 0) if n.is_value else 1
        if n.counter != expected:
            bad.append((n, expected, n.counter))
    return bad


def dead_sweep(ddg):
    """Remove value nodes nobody uses; returns how many were removed."""
    removed = 0
    changed = True
    while changed:
        changed = False
        for bid, blk in ddg.blocks.items():
            for n in list(blk):
                if (n.is_value and n.counter == 0 and not n.throws
                        and n.op is not IrOp.CALL):
                    blk.unlink(n)
                    n.removed = True
                    for y in n.ins:
                        y.counter -= 1
                    removed += 1
                    changed = True
    return removed
