"""Independent reference implementations used only by the tests.

None of these import the code under test beyond plain data types.
"""

import random

from silc.il import CONDITIONAL, Op, UNCONDITIONAL

# -- control flow --------------------------------------------------------------

_ENDS = CONDITIONAL | UNCONDITIONAL | {Op.SWITCH, Op.RET, Op.TRAP}


def two_pass_blocks(m):
    """Leaders from a first scan, then blocks and successor lists from a
    second. Successors are leader offsets, or "end" for the exit sink."""
    n = len(m.body)
    leaders = {0}
    for i, ins in enumerate(m.body):
        if ins.op in CONDITIONAL | UNCONDITIONAL:
            leaders.add(ins.arg)
        elif ins.op is Op.SWITCH:
            leaders.update(ins.arg)
        if ins.op in _ENDS and i + 1 < n:
            leaders.add(i + 1)
    starts = sorted(leaders)
    blocks = []
    for k, s in enumerate(starts):
        e = starts[k + 1] if k + 1 < len(starts) else n
        last = m.body[e - 1]
        if last.op in UNCONDITIONAL:
            succ = [last.arg]
        elif last.op in CONDITIONAL:
            succ = [last.arg, e]
        elif last.op is Op.SWITCH:
            succ = list(last.arg) + [e]
        elif last.op in (Op.RET, Op.TRAP):
            succ = ["end"]
        else:
            succ = [e]
        blocks.append((s, e, succ))
    return starts, blocks


def naive_dominators(succ, root):
    """Dom(b) = {b} | intersection of Dom(p) over reachable predecessors,
    iterated to a fixpoint from the full set."""
    nodes = set()
    work = [root]
    while work:
        b = work.pop()
        if b in nodes:
            continue
        nodes.add(b)
        work.extend(succ[b])
    preds = {b: [] for b in nodes}
    for b in nodes:
        for s in succ[b]:
            preds[s].append(b)
    dom = {b: set(nodes) for b in nodes}
    dom[root] = {root}
    changed = True
    while changed:
        changed = False
        for b in nodes:
            if b == root:
                continue
            new = set(nodes)
            for p in preds[b]:
                new &= dom[p]
            new |= {b}
            if new != dom[b]:
                dom[b] = new
                changed = True
    return dom


def immediate_dominators(dom):
    """The strict dominator that every other strict dominator dominates."""
    out = {}
    for b, ds in dom.items():
        strict = ds - {b}
        if not strict:
            out[b] = b
            continue
        for d in strict:
            if strict <= dom[d]:
                out[b] = d
                break
    return out


def natural_loop(succ, header, tail):
    preds = {}
    for b, ss in succ.items():
        for s in ss:
            preds.setdefault(s, []).append(b)
    body = {header}
    work = [tail]
    while work:
        b = work.pop()
        if b not in body:
            body.add(b)
            work.extend(preds.get(b, []))
    return body


def random_digraph(rng, n):
    """Successor lists over 0..n-1; node 0 is the entry. Mixes forward
    chains, random jumps (which make back edges and irreducible regions)
    and a few nodes nobody reaches."""
    succ = {b: [] for b in range(n)}
    for b in range(n):
        if b + 1 < n and rng.random() < 0.7:
            succ[b].append(b + 1)
        for _ in range(rng.choice((0, 1, 1, 2))):
            succ[b].append(rng.randrange(n))
    return succ


# -- corpus programs -------------------------------------------------------------

def wrap32(x):
    return ((x + 0x80000000) & 0xFFFFFFFF) - 0x80000000


def rc4_keystream(key, n):
    s = list(range(256))
    j = 0
    for i in range(256):
        j = (j + s[i] + key[i % len(key)]) & 255
        s[i], s[j] = s[j], s[i]
    i = j = 0
    out = []
    for _ in range(n):
        i = (i + 1) & 255
        j = (j + s[i]) & 255
        s[i], s[j] = s[j], s[i]
        out.append(s[(s[i] + s[j]) & 255])
    return out


def rc4_hash(key, n):
    acc = 0
    for b in rc4_keystream(key, n):
        acc = wrap32(acc * 31 + b)
    return acc


def sort_checksum(values):
    return wrap32(sum(v * (k + 1) for k, v in enumerate(sorted(values))))


def sample_arrays(seed, count=6, size=40):
    rng = random.Random(seed)
    out = [[], [7], list(range(size)), list(range(size, 0, -1)),
           [3] * 9]
    while len(out) < count:
        out.append([rng.randint(-1000, 1000) for _ in range(rng.randint(1, size))])
    return out
