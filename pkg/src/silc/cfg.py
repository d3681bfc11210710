"""Single-pass control-flow graph construction.

Leaders are the first instruction, every branch target and every instruction
following a branch. The builder walks the body once, keeping a sorted leader
list and a cursor on the next known leader; a backward branch into the middle
of an already formed block splits that block in two.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import List, Optional

from .il import CONDITIONAL, TERMINATORS, UNCONDITIONAL, Op


@dataclass(eq=False)
class BasicBlock:
    id: int
    leader: int
    end: int
    successors: List[int] = field(default_factory=list)
    pred_count: int = 0
    dfn: Optional[int] = None

    @property
    def virtual(self):
        return self.leader == self.end

    def __repr__(self):
        return f"B{self.id}[{self.leader},{self.end})->{self.successors}"


@dataclass
class Cfg:
    blocks: List[BasicBlock]
    first_block: int
    last_block: int
    leaders: List[int]

    def predecessors(self):
        """Predecessor lists (duplicates kept, one entry per edge)."""
        preds = [[] for _ in self.blocks]
        for b in self.blocks:
            for s in b.successors:
                preds[s].append(b.id)
        return preds

    def edges(self):
        return [(b.id, s) for b in self.blocks for s in b.successors]

    def block_at(self, offset):
        i = bisect.bisect_right(self.leaders, offset) - 1
        return self.blocks[i]

    def real_blocks(self):
        return [b for b in self.blocks if b.id != self.last_block]


class _Block:
    __slots__ = ("leader", "end", "succs", "preds")

    def __init__(self, leader):
        self.leader = leader
        self.end = None
        self.succs = []
        self.preds = 0


def build_cfg(m):
    body = m.body
    n = len(body)
    blocks = {}
    leaders = []

    def add_edge(a, b):
        a.succs.append(b)
        b.preds += 1

    def create_leader(off):
        nonlocal next_leader
        if off >= n:
            return
        if off not in blocks:
            bisect.insort(leaders, off)
            blocks[off] = _Block(off)
        if cursor < off < next_leader:
            next_leader = off

    def enclosing(off):
        return blocks[leaders[bisect.bisect_right(leaders, off) - 1]]

    first_block = _Block(0)
    blocks[0] = first_block
    leaders.append(0)
    last_block = _Block(n)
    last_block.end = n

    current = first_block
    next_leader = n
    cursor = 0
    prev = None

    def create_block(target, i):
        nonlocal current, next_leader
        if target in blocks:
            return blocks[target]
        if target > i:
            create_leader(target)
            return blocks[target]
        # Backward branch into the middle of an existing block: split it.
        old = enclosing(target)
        new = _Block(target)
        new.end = old.end
        new.succs = old.succs
        old.succs = []
        old.end = target
        bisect.insort(leaders, target)
        blocks[target] = new
        add_edge(old, new)
        if old is current:
            current = new
        return new

    for i in range(n):
        cursor = i
        if i == next_leader:
            current.end = i
            if prev is not None and prev.op not in TERMINATORS:
                add_edge(current, blocks[i])
            current = blocks[i]
            k = bisect.bisect_right(leaders, i)
            next_leader = leaders[k] if k < len(leaders) else n
        ins = body[i]
        op = ins.op
        if op in UNCONDITIONAL or op in CONDITIONAL:
            # Conditional fall-through edges are added when the block closes.
            target = create_block(ins.arg, i)
            add_edge(current, target)
            create_leader(i + 1)
        elif op is Op.SWITCH:
            for t in ins.arg:
                add_edge(current, create_block(t, i))
            create_leader(i + 1)
        elif op in (Op.RET, Op.TRAP):
            add_edge(current, last_block)
            create_leader(i + 1)
        prev = ins
    current.end = n

    ordered = [blocks[off] for off in leaders] + [last_block]
    ids = {id(b): k for k, b in enumerate(ordered)}
    out = [BasicBlock(k, b.leader, b.end, [ids[id(s)] for s in b.succs], b.preds)
           for k, b in enumerate(ordered)]
    return Cfg(out, 0, len(out) - 1, list(leaders))

