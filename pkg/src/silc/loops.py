"""Depth-first numbering, immediate dominators and natural loops.

Blocks get postorder numbers, so a dominator always has a higher number than
the blocks it dominates. Immediate dominators follow the iterative scheme of
Cooper, Harvey and Kennedy; loop detection walks the idom vector upward from
each predecessor and stops as soon as the number exceeds the candidate
header's.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional


@dataclass
class Numbering:
    postorder: Dict[int, int]   # block id -> dfn
    rpo: List[int]              # block ids, reverse postorder
    order: List[int]            # dfn -> block id

    def __contains__(self, block_id):
        return block_id in self.postorder


@dataclass
class IdomVector:
    idom: List[int]             # dfn -> idom dfn; root maps to itself

    def dominators(self, dfn):
        """All dominators of ``dfn``, innermost first, including itself."""
        out = [dfn]
        while self.idom[dfn] != dfn:
            dfn = self.idom[dfn]
            out.append(dfn)
        return out


@dataclass(eq=False)
class Loop:
    header: Optional[int]
    body: frozenset
    parent: Optional["Loop"] = None
    first_child: Optional["Loop"] = None
    next_sibling: Optional["Loop"] = None
    first_block: Optional[int] = None

    def children(self):
        c = self.first_child
        while c is not None:
            yield c
            c = c.next_sibling

    @property
    def depth(self):
        d, p = 0, self.parent
        while p is not None:
            d, p = d + 1, p.parent
        return d

    def __repr__(self):
        h = "root" if self.header is None else f"B{self.header}"
        return f"Loop({h}, body={sorted(self.body)})"


@dataclass
class LoopTree:
    root: Loop
    loops: List[Loop] = field(default_factory=list)   # discovery order, root first

    def innermost(self, block_id):
        node = self.root
        while True:
            for c in node.children():
                if block_id in c.body:
                    node = c
                    break
            else:
                return node


def number_blocks(cfg):
    visited = {cfg.first_block}
    post = []
    stack = [(cfg.first_block, 0)]
    while stack:
        b, k = stack[-1]
        succs = cfg.blocks[b].successors
        if k < len(succs):
            stack[-1] = (b, k + 1)
            s = succs[k]
            if s not in visited:
                visited.add(s)
                stack.append((s, 0))
        else:
            stack.pop()
            post.append(b)
    postorder = {b: i for i, b in enumerate(post)}
    for blk in cfg.blocks:
        blk.dfn = postorder.get(blk.id)
    return Numbering(postorder, post[::-1], post)


def compute_idoms(cfg, numbering, preds=None):
    if preds is None:
        preds = cfg.predecessors()
    num = numbering.postorder
    idom = [None] * len(numbering.order)
    root = num[cfg.first_block]
    idom[root] = root

    def intersect(a, b):
        while a != b:
            while a < b:
                a = idom[a]
            while b < a:
                b = idom[b]
        return a

    # Predecessors as dfn lists, unreachable ones dropped.
    pdfn = {}
    for b in numbering.rpo:
        pdfn[b] = [num[p] for p in preds[b] if p in num]

    changed = True
    while changed:
        changed = False
        for b in numbering.rpo[1:]:
            new = None
            for p in pdfn[b]:
                if idom[p] is None:
                    continue
                new = p if new is None else intersect(p, new)
            bd = num[b]
            if idom[bd] != new:
                idom[bd] = new
                changed = True
    return IdomVector(idom)


def collect_loop_body(header, tail, preds, reachable=None):
    body = {header, tail}
    work = [] if tail == header else [tail]
    while work:
        b = work.pop()
        for p in preds[b]:
            if p not in body and (reachable is None or p in reachable):
                body.add(p)
                work.append(p)
    return body


def _insert(root, loop):
    parent = root
    while True:
        for c in parent.children():
            if loop.header in c.body:
                parent = c
                break
        else:
            break
    loop.parent = parent
    if parent.first_child is None:
        parent.first_child = loop
    else:
        last = parent.first_child
        while last.next_sibling is not None:
            last = last.next_sibling
        last.next_sibling = loop


def detect_natural_loops(cfg, numbering, idoms, preds=None):
    if preds is None:
        preds = cfg.predecessors()
    num = numbering.postorder
    idom = idoms.idom
    root = Loop(None, frozenset(numbering.rpo), first_block=cfg.first_block)
    tree = LoopTree(root, [root])
    for bb1 in numbering.rpo:
        if cfg.blocks[bb1].pred_count == 0:
            continue
        d1 = num[bb1]
        body = None
        for p in preds[bb1]:
            if p not in num:
                continue
            cur = num[p]
            while cur < d1:
                cur = idom[cur]
            if cur == d1:
                # bb1 dominates p: p -> bb1 is a back edge.
                part = collect_loop_body(bb1, p, preds, num)
                body = part if body is None else body | part
        if body is not None:
            loop = Loop(bb1, frozenset(body), first_block=bb1)
            _insert(root, loop)
            tree.loops.append(loop)
    return tree


def back_edges(cfg, numbering, idoms, preds=None):
    """Edges (p, h) classified as back edges by the idom walk."""
    if preds is None:
        preds = cfg.predecessors()
    num = numbering.postorder
    out = []
    for h in numbering.rpo:
        for p in preds[h]:
            if p not in num:
                continue
            cur = num[p]
            while cur < num[h]:
                cur = idoms.idom[cur]
            if cur == num[h]:
                out.append((p, h))
    return out
