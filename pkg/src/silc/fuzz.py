"""Seeded generator of small, valid, terminating IL programs.

Programs are built from structured statements (assignments, diamonds that
carry stack values across blocks, counted loops, switches, array traffic,
calls to helper methods, guarded traps) so they always validate and always
terminate. Used by the differential tests.
"""

from __future__ import annotations

import random

from .il import format_methods, parse

INTERESTING = (0, 1, -1, 2, 3, 7, 31, 32, 255, -2147483648, 2147483647,
               65536, -7, 100)
_BINOPS = ("add", "sub", "mul", "and", "or", "xor", "shl", "shr", "shru",
           "div", "rem")
_CMP = ("beq", "bne", "blt", "ble", "bgt", "bge")


class _Gen:
    def __init__(self, rng, name, args, locs, returns, helpers, budget,
                 array_local=None, allow_loops=True):
        self.rng = rng
        self.name = name
        self.args = args
        self.locs = locs
        self.returns = returns
        self.helpers = helpers
        self.budget = budget
        self.array_local = array_local
        self.allow_loops = allow_loops
        self.lines = []
        self.count = 0
        self.labels = 0
        self.reserved = set()      # loop counters not to be written

    def ins(self, text):
        self.lines.append("    " + text)
        self.count += 1

    def label(self):
        self.labels += 1
        return f"L{self.labels}"

    def place(self, lab):
        self.lines.append(f"{lab}:")

    def left(self):
        return self.budget - self.count

    def int_locals(self):
        return [i for i in range(self.locs) if i != self.array_local]

    def const(self):
        r = self.rng
        return r.choice(INTERESTING) if r.random() < 0.6 else r.randint(-50, 50)

    # -- expressions push exactly one int -----------------------------------

    def expr(self, depth=0):
        r = self.rng
        room = self.left()
        choice = r.random()
        if depth >= 3 or room < 8 or choice < 0.35:
            return self.leaf()
        if choice < 0.65:
            op = r.choice(_BINOPS)
            self.expr(depth + 1)
            if op in ("div", "rem") and r.random() < 0.7:
                self.ins(f"ldc {r.choice((1, 2, 3, -3, 7, 0, -1))}")
            else:
                self.expr(depth + 1)
            self.ins(op)
        elif choice < 0.72:
            self.expr(depth + 1)
            self.ins(r.choice(("neg", "not")))
        elif choice < 0.8:
            # The same value used twice.
            self.expr(depth + 1)
            self.ins("dup")
            self.ins(r.choice(("add", "mul", "xor", "sub")))
        elif choice < 0.88 and self.array_local is not None:
            self.ins(f"ldloc {self.array_local}")
            if r.random() < 0.3:
                self.ins("ldlen")
            else:
                self.index()
                self.ins("ldelem")
        elif self.helpers and choice < 0.95:
            fn = r.choice([h for h in self.helpers if h[3]] or [None])
            if fn is None:
                return self.leaf()
            for _ in range(fn[1]):
                self.expr(depth + 2)
            self.ins(f"call {fn[0]}")
        else:
            self.leaf()

    def leaf(self):
        r = self.rng
        ints = self.int_locals()
        c = r.random()
        if c < 0.35 or (not ints and not self.args):
            self.ins(f"ldc {self.const()}")
        elif c < 0.65 and self.args:
            self.ins(f"ldarg {r.randrange(self.args)}")
        elif ints:
            self.ins(f"ldloc {r.choice(ints)}")
        else:
            self.ins(f"ldarg {r.randrange(self.args)}")

    def index(self):
        self.expr(2)
        if self.rng.random() < 0.85:
            self.ins("ldc 7")
            self.ins("and")

    def cond(self, target):
        r = self.rng
        if r.random() < 0.5:
            self.expr(1)
            self.ins(f"{r.choice(('brtrue', 'brfalse'))} {target}")
        else:
            self.expr(1)
            self.expr(1)
            self.ins(f"{r.choice(_CMP)} {target}")

    # -- statements leave the stack as they found it ------------------------

    def store(self):
        r = self.rng
        targets = [("stloc", i) for i in self.int_locals() if i not in self.reserved]
        targets += [("starg", i) for i in range(self.args)]
        if not targets:
            self.expr()
            self.ins("pop")
            return
        kind, i = r.choice(targets)
        self.expr()
        self.ins(f"{kind} {i}")

    def stmt(self, depth=0):
        r = self.rng
        if self.left() < 12:
            self.store()
            return
        c = r.random()
        if c < 0.3:
            self.store()
        elif c < 0.42:
            # if/else diamond
            other, end = self.label(), self.label()
            self.cond(other)
            self.stmt(depth + 1)
            self.ins(f"br {end}")
            self.place(other)
            self.stmt(depth + 1)
            self.place(end)
            self.ins(f"ldc {self.const()}")
            self.ins("pop")
        elif c < 0.54 and self.int_locals():
            # A value carried across a diamond, combined at the join.
            other, end = self.label(), self.label()
            self.expr(1)
            self.cond(other)
            self.expr(1)
            self.ins(f"br {end}")
            self.place(other)
            self.expr(1)
            self.place(end)
            self.ins(r.choice(("add", "sub", "xor", "mul")))
            self.store_top()
        elif c < 0.6 and self.int_locals():
            # A value passing untouched through a block.
            skip = self.label()
            self.expr(1)
            self.cond(skip)
            self.ins(f"ldc {self.const()}")
            self.ins("pop")
            self.place(skip)
            self.store_top()
        elif c < 0.72 and self.allow_loops and depth < 2:
            self.loop(depth)
        elif c < 0.78:
            self.switch(depth)
        elif c < 0.86 and self.array_local is not None:
            self.ins(f"ldloc {self.array_local}")
            self.index()
            self.expr(1)
            self.ins("stelem")
        elif c < 0.9:
            skip = self.label()
            self.cond(skip)
            self.ins("trap")
            self.place(skip)
            self.ins("ldc 0")
            self.ins("pop")
        elif c < 0.95 and self.helpers:
            fn = r.choice(self.helpers)
            for _ in range(fn[1]):
                self.expr(2)
            self.ins(f"call {fn[0]}")
            if fn[3]:
                self.ins("pop")
        else:
            self.expr()
            self.ins("pop")

    def store_top(self):
        ints = [i for i in self.int_locals() if i not in self.reserved]
        if ints:
            self.ins(f"stloc {self.rng.choice(ints)}")
        else:
            self.ins("pop")

    def loop(self, depth):
        free = [i for i in self.int_locals() if i not in self.reserved]
        if not free:
            self.store()
            return
        ctr = self.rng.choice(free)
        self.reserved.add(ctr)
        head = self.label()
        self.ins(f"ldc {self.rng.randint(1, 5)}")
        self.ins(f"stloc {ctr}")
        self.place(head)
        for _ in range(self.rng.randint(1, 3)):
            if self.left() < 16:
                break
            self.stmt(depth + 1)
        self.ins(f"ldloc {ctr}")
        self.ins("ldc 1")
        self.ins("sub")
        self.ins("dup")
        self.ins(f"stloc {ctr}")
        self.ins(f"brtrue {head}")
        self.reserved.discard(ctr)

    def switch(self, depth):
        n = self.rng.randint(1, 3)
        cases = [self.label() for _ in range(n)]
        end = self.label()
        self.expr(1)
        if self.rng.random() < 0.7:
            self.ins("ldc 3")
            self.ins("and")
        self.ins(f"switch ({', '.join(cases)})")
        self.store()
        self.ins(f"br {end}")
        for k, lab in enumerate(cases):
            self.place(lab)
            self.store()
            if k + 1 < n:
                self.ins(f"br {end}")
        self.place(end)
        self.ins("ldc 0")
        self.ins("pop")

    def method(self):
        header = (f".method {self.name} {self.args} args {self.locs} locals "
                  f"{'ret' if self.returns else 'void'}")
        if self.array_local is not None:
            r = self.rng
            if r.random() < 0.9:
                if self.args and r.random() < 0.5:
                    self.ins(f"ldarg {r.randrange(self.args)}")
                    self.ins("ldc 7")
                    self.ins("and")
                    self.ins("ldc 1")
                    self.ins("add")
                else:
                    self.ins(f"ldc {r.randint(0, 8)}")
                self.ins("newarr")
                self.ins(f"stloc {self.array_local}")
        while self.left() > 10:
            self.stmt()
        if self.returns:
            self.expr(1)
        self.ins("ret")
        return header + "\n" + "\n".join(self.lines) + "\n"


def random_unit(seed, max_instructions=64, max_locals=4):
    """Source text of a random unit whose entry method is ``main``."""
    rng = random.Random(seed)
    helpers = []
    texts = []
    for k in range(rng.choice((0, 0, 1, 2))):
        h = (f"h{k}", rng.randint(0, 3), 0, rng.random() < 0.8)
        g = _Gen(rng, h[0], h[1], rng.randint(0, 2), h[3], [],
                 rng.randint(6, 20), allow_loops=False)
        g.locs = rng.randint(0, 2)
        texts.append(g.method())
        helpers.append(h)
    while True:
        locs = rng.randint(0, max_locals)
        array_local = locs - 1 if locs >= 2 and rng.random() < 0.4 else None
        args = rng.randint(0, 3)
        g = _Gen(rng, "main", args, locs, True, helpers,
                 rng.randint(12, max_instructions), array_local)
        main = g.method()
        if g.count <= max_instructions:
            return main + "\n" + "\n".join(texts)


def random_inputs(seed, arg_count, n=4):
    rng = random.Random(seed * 7919 + 1)
    out = []
    for _ in range(n):
        out.append([rng.choice(INTERESTING) if rng.random() < 0.5
                    else rng.randint(-1000, 1000) for _ in range(arg_count)])
    return out


def roundtrip(text):
    return format_methods(parse(text))
