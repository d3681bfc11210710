"""Front door: parse, validate and compile a unit with either backend."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict

from .baseline import generate_baseline
from .cfg import build_cfg
from .codegen import generate
from .ddg import translate_method
from .il import parse, validate_unit
from .loops import compute_idoms, detect_natural_loops, number_blocks
from .options import DEFAULT
from .target import TargetProgram

PHASES = ("CGEN", "DDG", "CFG", "DFST", "IDOM", "LOOPS")


@dataclass
class MethodArtifacts:
    cfg: object
    numbering: object
    idoms: object
    loops: object
    ddg: object
    code: object


@dataclass
class Compilation:
    program: TargetProgram
    artifacts: Dict[str, MethodArtifacts] = field(default_factory=dict)
    phase_ns: Dict[str, int] = field(default_factory=dict)


def load(text):
    """Parse and validate; returns (methods, {name: depth map})."""
    methods = parse(text)
    return methods, validate_unit(methods)


def compile_opt(methods, depths, options=DEFAULT, probes=False):
    clock = time.perf_counter_ns
    phase = dict.fromkeys(PHASES, 0)
    out = {}
    arts = {}
    unit = {m.name: m for m in methods}
    for m in methods:
        t0 = clock()
        cfg = build_cfg(m)
        t1 = clock()
        numbering = number_blocks(cfg)
        t2 = clock()
        preds = cfg.predecessors()
        idoms = compute_idoms(cfg, numbering, preds)
        t3 = clock()
        loops = detect_natural_loops(cfg, numbering, idoms, preds)
        t4 = clock()
        ddg = translate_method(m, cfg, numbering, depths[m.name], unit, options)
        t5 = clock()
        code = generate(ddg, cfg, probes)
        t6 = clock()
        phase["CFG"] += t1 - t0
        phase["DFST"] += t2 - t1
        phase["IDOM"] += t3 - t2
        phase["LOOPS"] += t4 - t3
        phase["DDG"] += t5 - t4
        phase["CGEN"] += t6 - t5
        out[m.name] = code
        arts[m.name] = MethodArtifacts(cfg, numbering, idoms, loops, ddg, code)
    return Compilation(TargetProgram(out, "opt"), arts, phase)


def compile_baseline(methods, depths=None):
    unit = {m.name: m for m in methods}
    t0 = time.perf_counter_ns()
    out = {m.name: generate_baseline(m, unit) for m in methods}
    return Compilation(TargetProgram(out, "baseline"), {},
                       {"TOTAL": time.perf_counter_ns() - t0})


def compile_unit(methods, depths, backend="opt", options=DEFAULT, probes=False):
    if backend == "opt":
        return compile_opt(methods, depths, options, probes)
    if backend == "baseline":
        return compile_baseline(methods, depths)
    raise ValueError(f"unknown backend {backend!r}")


def run(methods, depths, entry, args=(), backend="opt", options=DEFAULT,
        max_steps=100_000_000, array=None):
    """Compile (unless interpreting) and execute ``entry``."""
    from .interp import interpret
    from .target import execute

    if backend == "interp":
        return interpret(methods, entry, args, max_steps, array)
    comp = compile_unit(methods, depths, backend, options)
    return execute(comp.program, entry, args, max_steps, array)
