"""The modeled CISC register machine.

Six allocatable registers R0..R5 (eax, ebx, ecx, edx, esi, edi), a frame
pointer and a stack pointer. ALU instructions are two-address: the
destination is also the first source. Operands are registers, immediates or
memory references ``[base + index*scale + disp]``; at most one operand may
touch memory. Instructions are kept structurally; branch targets are
instruction indices.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

from .il import CompilerBug
from .semantics import INT_MIN, Trap, TrapCode, wrap


class Reg(enum.IntEnum):
    R0 = 0
    R1 = 1
    R2 = 2
    R3 = 3
    R4 = 4
    R5 = 5
    FP = 6
    SP = 7

    def __str__(self):
        return self.name


ALLOCATABLE = (Reg.R0, Reg.R1, Reg.R2, Reg.R3, Reg.R4, Reg.R5)
# Initial free-list order: caller-saved registers before callee-saved ones.
ALLOC_ORDER = (Reg.R0, Reg.R3, Reg.R4, Reg.R2, Reg.R1, Reg.R5)
CALLEE_SAVED = (Reg.R1, Reg.R5)
CALLER_SAVED = (Reg.R0, Reg.R2, Reg.R3, Reg.R4)
RETURN_REG = Reg.R0
DIV_REGS = (Reg.R0, Reg.R3)     # dividend/quotient, remainder
SHIFT_REG = Reg.R2              # variable shift count

WORD = 4


@dataclass(frozen=True)
class Mem:
    base: Optional[Reg] = None
    index: Optional[Reg] = None
    scale: int = 1
    disp: int = 0

    def __str__(self):
        parts = []
        if self.base is not None:
            parts.append(str(self.base))
        if self.index is not None:
            parts.append(f"{self.index}*{self.scale}")
        s = " + ".join(parts)
        if self.disp or not parts:
            if not parts:
                s = str(self.disp)
            elif self.disp < 0:
                s += f" - {-self.disp}"
            else:
                s += f" + {self.disp}"
        return f"[{s}]"


Operand = Union[Reg, int, Mem, None]

ALU_MNEMONICS = frozenset({"ADD", "SUB", "MUL", "AND", "OR", "XOR", "SHL",
                           "SHR", "SHRU"})
UNARY_MNEMONICS = frozenset({"NEG", "NOT"})
JCC = {
    "JE": lambda a, b: a == b,
    "JNE": lambda a, b: a != b,
    "JL": lambda a, b: a < b,
    "JLE": lambda a, b: a <= b,
    "JG": lambda a, b: a > b,
    "JGE": lambda a, b: a >= b,
    "JB": lambda a, b: (a & 0xFFFFFFFF) < (b & 0xFFFFFFFF),
    "JBE": lambda a, b: (a & 0xFFFFFFFF) <= (b & 0xFFFFFFFF),
    "JA": lambda a, b: (a & 0xFFFFFFFF) > (b & 0xFFFFFFFF),
    "JAE": lambda a, b: (a & 0xFFFFFFFF) >= (b & 0xFFFFFFFF),
}
# Condition after swapping the CMP operands.
SWAPPED = {"JE": "JE", "JNE": "JNE", "JL": "JG", "JG": "JL", "JLE": "JGE",
           "JGE": "JLE", "JB": "JA", "JA": "JB", "JBE": "JAE", "JAE": "JBE"}
BRANCHES = frozenset(JCC) | {"JMP"}


class TInstr:
    """One target instruction. ``target`` holds a block id before branch
    fixup and an instruction index after; for CALL it is the method name."""

    __slots__ = ("mnem", "dst", "src", "target", "block", "stub")

    def __init__(self, mnem, dst=None, src=None, target=None, block=None,
                 stub=None):
        self.mnem = mnem
        self.dst = dst
        self.src = src
        self.target = target
        self.block = block
        self.stub = stub

    @property
    def form(self):
        kinds = []
        for o in (self.dst, self.src):
            if o is None:
                continue
            kinds.append("R" if isinstance(o, Reg) else "M" if isinstance(o, Mem)
                         else "I")
        return "".join(kinds)

    def memory_operand(self):
        for o in (self.dst, self.src):
            if isinstance(o, Mem):
                return o
        return None

    def render(self):
        ops = [str(o) for o in (self.dst, self.src) if o is not None]
        if self.mnem in BRANCHES:
            ops.append(f"@{self.target}")
        elif self.mnem == "CALL":
            ops.append(str(self.target))
        elif self.mnem == "TRAPSTUB":
            ops.append(self.stub.name)
        return f"{self.mnem} {', '.join(ops)}".rstrip()

    def __repr__(self):
        return f"TInstr({self.render()})"


@dataclass
class Frame:
    arg_count: int
    local_count: int
    temp_slots: int = 0
    spill_slots: int = 0
    saves_callee_regs: bool = True

    SAVED_R1 = -4
    SAVED_R5 = -8

    def arg(self, i):
        return Mem(Reg.FP, None, 1, 8 + WORD * (self.arg_count - 1 - i))

    def local(self, j):
        return Mem(Reg.FP, None, 1, -12 - WORD * j)

    def temp(self, i):
        return Mem(Reg.FP, None, 1, -12 - WORD * (self.local_count + i))

    def spill(self, k):
        return Mem(Reg.FP, None, 1,
                   -12 - WORD * (self.local_count + self.temp_slots + k))

    @property
    def reserve(self):
        """Bytes reserved below the callee-saved slots."""
        return WORD * (self.local_count + self.temp_slots + self.spill_slots)

    def table(self):
        rows = []
        if self.arg_count:
            rows.append(("args", 8, WORD * self.arg_count))
        rows += [("return_address", 4, WORD), ("saved_fp", 0, WORD),
                 ("saved_r1", self.SAVED_R1, WORD), ("saved_r5", self.SAVED_R5, WORD)]
        if self.local_count:
            rows.append(("locals", self.local(self.local_count - 1).disp,
                         WORD * self.local_count))
        if self.temp_slots:
            rows.append(("temporaries", self.temp(self.temp_slots - 1).disp,
                         WORD * self.temp_slots))
        if self.spill_slots:
            rows.append(("spill", self.spill(self.spill_slots - 1).disp,
                         WORD * self.spill_slots))
        return rows


@dataclass
class MethodCode:
    name: str
    code: List[TInstr]
    frame: Frame
    returns_value: bool = True
    block_start: Dict[int, int] = field(default_factory=dict)
    # code position -> allocator claims, recorded only on request
    probes: Optional[Dict[int, list]] = None

    def __len__(self):
        return len(self.code)


@dataclass
class TargetProgram:
    methods: Dict[str, MethodCode]
    backend: str = "opt"

    def instruction_count(self):
        return sum(len(mc) for mc in self.methods.values())

    def machine(self):
        m = self.__dict__.get("_machine")
        if m is None:
            m = self.__dict__["_machine"] = Machine(self)
        return m


@dataclass
class ExecResult:
    return_value: Optional[int] = None
    trap: Optional[TrapCode] = None
    steps: int = 0
    counts: Dict[str, int] = field(default_factory=dict)
    array: Optional[List[int]] = None

    def outcome(self):
        return ("trap", self.trap) if self.trap is not None else \
            ("value", self.return_value)


class MachineFault(Exception):
    """Wild memory access or malformed code: a compiler bug."""


# -- emulator ----------------------------------------------------------------

NULL_LIMIT = 0x1000
STACK_TOP = 0x100000
HEAP_BASE = STACK_TOP
HALT = -1
MAX_CALL_DEPTH = 10000


class _Params:
    """Collects the literal parameters of one instruction while its code
    template is rendered, so equal shapes share one compiled factory."""

    def __init__(self, strict=False):
        self.values = []
        self.strict = strict      # emit the heap bounds checks

    def __call__(self, v):
        self.values.append(int(v))
        return f"p{len(self.values) - 1}"


def _check(addr, strict):
    guard = f" or {addr} >= {STACK_TOP} and {addr} in G" if strict else ""
    return (f"if {addr} & 3 or {addr} < {NULL_LIMIT} or {addr} >= len(M) << 2"
            f"{guard}: fault({addr})\n        ")


def _mem_addr(m, P):
    """Address expression plus the base and index register expressions."""
    parts = []
    base = index = None
    if m.base is not None:
        base = f"R[{P(m.base)}]"
        parts.append(base)
    if m.index is not None:
        index = f"R[{P(m.index)}]"
        parts.append(f"{index} * {P(m.scale)}")
    parts.append(P(m.disp))
    return " + ".join(parts), base, index


def _operand(o, P):
    """(setup code, lvalue/rvalue expression) for one operand."""
    if isinstance(o, Reg):
        return "", f"R[{P(o)}]"
    if isinstance(o, Mem):
        addr, base, index = _mem_addr(o, P)
        pre = f"a = {addr}\n        "
        if P.strict and base is not None and index is not None:
            # Element access: the index must lie inside the base array.
            pre += (f"if not ({NULL_LIMIT} <= {base} < len(M) << 2 and "
                    f"0 <= {index} < M[{base} >> 2]): "
                    f"fault(a, 'element index out of bounds')\n        ")
        return pre + _check("a", P.strict), "M[a >> 2]"
    if o is None:
        raise MachineFault("missing operand")
    return "", P(o)


def _shape(o):
    if isinstance(o, Reg):
        return "r"
    if isinstance(o, Mem):
        return "m" + ("b" if o.base is not None else "") + \
            ("x" if o.index is not None else "")
    return "i"


_ALU_EXPR = {
    "ADD": "wrap({d} + {s})",
    "SUB": "wrap({d} - {s})",
    "MUL": "wrap({d} * {s})",
    "AND": "{d} & {s}",
    "OR": "{d} | {s}",
    "XOR": "{d} ^ {s}",
    "SHL": "wrap({d} << ({s} & 31))",
    "SHR": "{d} >> ({s} & 31)",
    "SHRU": "wrap(({d} & 0xFFFFFFFF) >> ({s} & 31))",
}


def _template(ins, P, nxt, target):
    """Body source of one instruction, with literals replaced by parameters.
    ``nxt`` and ``target`` are absolute code positions."""
    m = ins.mnem
    nxt = P(nxt)
    if m == "MOV":
        p0, r = _operand(ins.src, P)
        p1, w = _operand(ins.dst, P)
        return f"{p0}v = {r}\n        {p1}{w} = v\n        return {nxt}"
    if m in _ALU_EXPR:
        p0, r = _operand(ins.src, P)
        p1, w = _operand(ins.dst, P)
        return (f"{p0}s = {r}\n        {p1}{w} = "
                + _ALU_EXPR[m].format(d=w, s="s") + f"\n        return {nxt}")
    if m == "NEG":
        p1, w = _operand(ins.dst, P)
        return f"{p1}{w} = wrap(-{w})\n        return {nxt}"
    if m == "NOT":
        p1, w = _operand(ins.dst, P)
        return f"{p1}{w} = ~{w}\n        return {nxt}"
    if m == "DIV":
        p0, r = _operand(ins.dst, P)
        return (f"{p0}s = {r}\n        q, rm = div(R[0], s)\n"
                f"        R[0] = q\n        R[3] = rm\n        return {nxt}")
    if m == "CMP":
        p0, a = _operand(ins.dst, P)
        body = f"{p0}F[0] = {a}\n        "
        p1, b = _operand(ins.src, P)
        return body + f"{p1}F[1] = {b}\n        return {nxt}"
    if m in JCC:
        t = P(target)
        cond = _JCC_EXPR[m]
        return f"return {t} if {cond} else {nxt}"
    if m == "JMP":
        return f"return {P(target)}"
    if m == "PUSH":
        p0, r = _operand(ins.dst, P)
        return (f"{p0}v = {r}\n        sp = R[7] - 4\n"
                f"        if sp < {NULL_LIMIT}: fault(sp)\n"
                f"        R[7] = sp\n        M[sp >> 2] = v\n        return {nxt}")
    if m == "POP":
        p1, w = _operand(ins.dst, P)
        return (f"sp = R[7]\n        if sp >= {STACK_TOP}: fault(sp)\n"
                f"        v = M[sp >> 2]\n        R[7] = sp + 4\n        {p1}{w} = v\n"
                f"        return {nxt}")
    if m == "CALL":
        t = P(target)
        return (f"D[0] += 1\n        if D[0] > {MAX_CALL_DEPTH}: raise Trap(BUDGET)\n"
                f"        sp = R[7] - 4\n        R[7] = sp\n        M[sp >> 2] = {nxt}\n"
                f"        return {t}")
    if m == "RET":
        return ("sp = R[7]\n        v = M[sp >> 2]\n        R[7] = sp + 4\n"
                "        D[0] -= 1\n        return v")
    if m == "ALLOC":
        p0, r = _operand(ins.src, P)
        p1, w = _operand(ins.dst, P)
        return f"{p0}n = {r}\n        v = alloc(n)\n        {p1}{w} = v\n        return {nxt}"
    if m == "TRAPSTUB":
        return f"raise Trap(TRAP_CODES[{P(ins.stub)}])"
    raise MachineFault(f"unknown mnemonic {m}")


_U = "(F[{k}] & 0xFFFFFFFF)"
_JCC_EXPR = {
    "JE": "F[0] == F[1]", "JNE": "F[0] != F[1]", "JL": "F[0] < F[1]",
    "JLE": "F[0] <= F[1]", "JG": "F[0] > F[1]", "JGE": "F[0] >= F[1]",
    "JB": f"{_U.format(k=0)} < {_U.format(k=1)}",
    "JBE": f"{_U.format(k=0)} <= {_U.format(k=1)}",
    "JA": f"{_U.format(k=0)} > {_U.format(k=1)}",
    "JAE": f"{_U.format(k=0)} >= {_U.format(k=1)}",
}

_FACTORIES = {}

# A fused run of instructions ends at anything that can transfer control
# or trap, so a trap can only come from the last instruction of a run.
_ENDS_RUN = frozenset(JCC) | {"JMP", "CALL", "RET", "DIV", "ALLOC", "TRAPSTUB"}
HOT = 32
_STACK_WORDS = STACK_TOP >> 2


def _factory(key, body, nparams):
    fn = _FACTORIES.get(key)
    if fn is None:
        params = "".join(f", p{i}" for i in range(nparams))
        src = (f"def make(S{params}):\n"
               "    R, M, F, D = S.R, S.M, S.F, S.D\n"
               "    fault, alloc, div, G = S.fault, S.alloc, S.div, S.G\n"
               "    def f():\n"
               f"        {body}\n"
               "    return f\n")
        env = {"wrap": wrap, "Trap": Trap, "BUDGET": TrapCode.STEP_BUDGET,
               "TRAP_CODES": {int(t): t for t in TrapCode}}
        exec(compile(src, f"<target {key[0]}>", "exec"), env)
        fn = _FACTORIES[key] = env["make"]
    return fn


class Machine:
    """Links a :class:`TargetProgram` into one flat code array and runs it.

    Memory is a list of words; the stack grows down from ``STACK_TOP`` and
    the heap grows up from it. An array reference points at a length word
    followed by the elements.
    """

    def __init__(self, program):
        self.program = program
        self.flat = []
        self.entry = {}
        self.base = []
        for name, mc in program.methods.items():
            self.entry[name] = len(self.flat)
            self.base += [len(self.flat)] * len(mc.code)
            self.flat.extend(mc.code)
        self.R = [0] * 8
        self.M = [0] * _STACK_WORDS
        self.F = [0, 0]
        self.D = [0]
        self.G = set()
        self.fns = None
        self.strict_fns = None
        self.runs = None
        self.fused = None

    def fault(self, a, why="wild memory access"):
        raise MachineFault(f"{why} at {a:#x}")

    def alloc(self, n):
        if n < 0:
            raise Trap(TrapCode.INDEX_RANGE)
        M = self.M
        ref = len(M) << 2
        M.append(n)
        M.extend([0] * n)
        # One guard word between arrays catches linear overruns.
        self.G.add(len(M) << 2)
        M.append(0)
        return ref

    @staticmethod
    def div(a, b):
        if b == 0:
            raise Trap(TrapCode.DIV_ZERO)
        if a == INT_MIN and b == -1:
            raise Trap(TrapCode.OVERFLOW)
        q = abs(a) // abs(b)
        if (a < 0) != (b < 0):
            q = -q
        return q, a - q * b

    def _targets(self, pc):
        ins = self.flat[pc]
        if ins.mnem in JCC or ins.mnem == "JMP":
            return self.base[pc] + ins.target
        if ins.mnem == "CALL":
            return self.entry[ins.target]
        return None

    def _key(self, ins):
        return (ins.mnem, _shape(ins.dst), _shape(ins.src))

    def _link(self, strict=False):
        fns = []
        for pc, ins in enumerate(self.flat):
            P = _Params(strict)
            body = _template(ins, P, pc + 1, self._targets(pc))
            key = self._key(ins) + (strict,)
            fns.append(_factory(key, body, len(P.values))(self, *P.values))
        return fns

    def _runs(self):
        """Length of the straight-line run starting at each leader, else 0."""
        n = len(self.flat)
        leader = [False] * n + [True]
        for pc in self.entry.values():
            leader[pc] = True
        for pc, ins in enumerate(self.flat):
            t = self._targets(pc)
            if t is not None:
                leader[t] = True
            if ins.mnem in _ENDS_RUN:
                leader[pc + 1] = True
        runs = [0] * n
        for pc in range(n):
            if leader[pc]:
                k = pc
                while self.flat[k].mnem not in _ENDS_RUN and not leader[k + 1]:
                    k += 1
                runs[pc] = k - pc + 1
        return runs

    def _fuse(self, pc):
        n = self.runs[pc]
        P = _Params()
        parts = []
        for k in range(pc, pc + n):
            body = _template(self.flat[k], P, k + 1, self._targets(k))
            if k + 1 < pc + n:
                body = body[:body.rindex("\n")]
            parts.append(body)
        key = ("run",) + tuple(self._key(self.flat[k]) for k in range(pc, pc + n))
        return _factory(key, "\n        ".join(parts), len(P.values))(self, *P.values)

    def _hooks(self):
        """Per code position: (method, probe list) or None."""
        hooks = [None] * len(self.flat)
        for name, mc in self.program.methods.items():
            base = self.entry[name]
            for k, plist in (mc.probes or {}).items():
                hooks[base + k] = (name, plist)
        self._values = {}
        self._probe_count = 0
        return hooks

    def _probe(self, pc, hook):
        """Check that every register and spill slot the allocator believes
        holds a node still holds the value the node had when first seen."""
        name, plist = hook
        fp = self.R[6]
        key = (name, fp)
        for kind, payload in plist:
            if kind == "enter":
                self._values[key] = {}
                continue
            seen = self._values.setdefault(key, {})
            for where, nid in payload:
                if where >= 0:
                    v = self.R[where]
                else:
                    v = self.M[(fp + where) >> 2]
                self._probe_count += 1
                if nid not in seen:
                    seen[nid] = v
                elif seen[nid] != v:
                    loc = Reg(where).name if where >= 0 else f"[FP - {-where}]"
                    raise MachineFault(
                        f"{name}@{pc - self.entry[name]}: {loc} should hold "
                        f"n{nid}={seen[nid]}, holds {v}")

    def execute(self, entry, args=(), max_steps=100_000_000, array=None,
                checked=False):
        """Run ``entry``. With ``checked`` the code is single-stepped and the
        allocator probes recorded by the code generator are verified."""
        if entry not in self.entry:
            raise KeyError(entry)
        mc = self.program.methods[entry]
        if self.fns is None:
            self.fns = self._link()
            self.runs = self._runs()
            self.fused = [None] * len(self.fns)
            self.heat = [0] * len(self.fns)
        fns, runs, fused = self.fns, self.runs, self.fused
        if checked:
            if self.strict_fns is None:
                self.strict_fns = self._link(strict=True)
            fns = self.strict_fns
        R, M = self.R, self.M
        R[:] = [0] * 8
        # Drop the previous run's heap. Stack words are left as they were;
        # compiled code never reads a slot it has not written this run.
        del M[_STACK_WORDS:]
        self.G.clear()
        self.F[:] = [0, 0]

        args = list(args)
        array_ref = None
        if array is not None:
            array_ref = self.alloc(len(array))
            for i, v in enumerate(array):
                M[(array_ref >> 2) + 1 + i] = wrap(v)
            args = [array_ref] + args
        if len(args) != mc.frame.arg_count:
            raise ValueError(f"{entry} takes {mc.frame.arg_count} arguments, "
                             f"got {len(args)}")
        sp = STACK_TOP
        for v in args:
            sp -= 4
            M[sp >> 2] = wrap(v)
        sp -= 4
        M[sp >> 2] = HALT
        R[7] = sp
        self.D[0] = 1

        counts = [0] * len(fns)
        run_counts = [0] * len(fns)
        heat = self.heat
        pc = self.entry[entry]
        steps = 0
        result = ExecResult()
        if checked:
            hooks = self._hooks()
        try:
            while checked and pc != HALT:
                if steps >= max_steps:
                    raise Trap(TrapCode.STEP_BUDGET)
                steps += 1
                counts[pc] += 1
                if hooks[pc] is not None:
                    self._probe(pc, hooks[pc])
                pc = fns[pc]()
            while pc != HALT:
                f = fused[pc]
                if f is not None and steps + runs[pc] <= max_steps:
                    steps += runs[pc]
                    run_counts[pc] += 1
                    pc = f()
                    continue
                if steps >= max_steps:
                    raise Trap(TrapCode.STEP_BUDGET)
                steps += 1
                counts[pc] += 1
                if runs[pc] > 1:
                    heat[pc] += 1
                    if heat[pc] == HOT:
                        fused[pc] = self._fuse(pc)
                pc = fns[pc]()
            result.return_value = R[0] if mc.returns_value else None
        except Trap as t:
            result.trap = t.code
        except IndexError as e:
            raise MachineFault(f"execution fell off the code array at {pc}") from e
        result.steps = steps
        if checked:
            self.checked_probes = self._probe_count
        for pc, c in enumerate(run_counts):
            if c:
                for k in range(pc, pc + runs[pc]):
                    counts[k] += c
        per = {}
        for k, c in enumerate(counts):
            if c:
                mn = self.flat[k].mnem
                per[mn] = per.get(mn, 0) + c
        result.counts = per
        if array_ref is not None:
            base = array_ref >> 2
            result.array = M[base + 1: base + 1 + M[base]]
        return result


def execute(program, entry, args=(), max_steps=100_000_000, array=None,
            checked=False):
    return program.machine().execute(entry, args, max_steps, array, checked)
