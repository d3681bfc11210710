"""Command-line driver: ``silc build | run | compare``."""

from __future__ import annotations

import argparse
import statistics
import sys

from . import dumps
from .il import CompilerBug, SilError
from .options import DEFAULT
from .pipeline import PHASES, compile_unit, load
from .target import MachineFault, execute

REPEATS = 30
EXIT_OK, EXIT_USER, EXIT_BUG = 0, 1, 2


class UsageError(Exception):
    pass


def _ints(text):
    if text is None or not text.strip():
        return []
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _read(path):
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _options(ns):
    off = [k for k in ("fold", "repo", "dce", "embed") if getattr(ns, f"no_{k}", False)]
    return DEFAULT.without(*off)


def _entry(methods, name):
    for m in methods:
        if m.name == name:
            return m
    raise UsageError(f"no method named {name!r}")


def _check_arity(m, args, array):
    n = len(args) + (array is not None)
    if n != m.arg_count:
        raise UsageError(f"{m.name} takes {m.arg_count} arguments, got {n}")


def cmd_build(ns, out):
    methods, depths = load(_read(ns.file))
    comp = compile_unit(methods, depths, ns.backend, _options(ns))
    if ns.dump is None:
        for name, mc in comp.program.methods.items():
            print(f"{name}: {len(mc)} instructions", file=out)
        return
    if ns.backend == "baseline" and ns.dump not in ("asm", "frame"):
        raise UsageError(f"--dump {ns.dump} needs the opt backend")
    for k, m in enumerate(methods):
        if len(methods) > 1:
            if k:
                print(file=out)
            print(f"; method {m.name}", file=out)
        mc = comp.program.methods[m.name]
        if ns.dump == "asm":
            text = dumps.dump_asm(mc)
        elif ns.dump == "frame":
            text = dumps.dump_frame(mc.frame)
        else:
            art = comp.artifacts[m.name]
            if ns.dump == "cfg":
                text = dumps.dump_cfg(art.cfg, m.name)
            elif ns.dump == "dom":
                text = dumps.dump_dom(art.cfg, art.numbering, art.idoms)
            elif ns.dump == "loops":
                text = dumps.dump_loops(art.loops)
            else:
                text = dumps.dump_ddg(art.ddg)
        print(text, file=out)


def cmd_run(ns, out):
    methods, depths = load(_read(ns.file))
    m = _entry(methods, ns.entry)
    args = _ints(ns.args)
    array = _ints(ns.array) if ns.array is not None else None
    _check_arity(m, args, array)
    if ns.backend == "interp":
        from .interp import interpret
        res = interpret(methods, ns.entry, args, ns.max_steps, array)
    else:
        comp = compile_unit(methods, depths, ns.backend, _options(ns))
        res = execute(comp.program, ns.entry, args, ns.max_steps, array)
    if res.trap is not None:
        print(f"trap={res.trap.name}", file=out)
    elif res.return_value is not None:
        print(f"result={res.return_value}", file=out)
    else:
        print("result=void", file=out)
    if ns.stats:
        print(f"steps={res.steps}", file=out)


def _timed(methods, depths, backend, repeats):
    totals = []
    phases = {p: [] for p in PHASES}
    comp = None
    for _ in range(repeats):
        comp = compile_unit(methods, depths, backend)
        if backend == "opt":
            for p in PHASES:
                phases[p].append(comp.phase_ns[p])
            totals.append(sum(comp.phase_ns.values()))
        else:
            totals.append(comp.phase_ns["TOTAL"])
    med = {p: int(statistics.median(v)) for p, v in phases.items() if v}
    return comp, int(statistics.median(totals)), med


def cmd_compare(ns, out):
    methods, depths = load(_read(ns.file))
    m = _entry(methods, ns.entry)
    args = _ints(ns.args)
    array = _ints(ns.array) if ns.array is not None else None
    _check_arity(m, args, array)
    rows = {}
    for backend in ("baseline", "opt"):
        comp, total, phases = _timed(methods, depths, backend, ns.repeats)
        res = execute(comp.program, ns.entry, args, ns.max_steps, array)
        cells = [f"backend={backend}", f"compile_ns={total}"]
        cells += [f"{p}={phases[p]}" for p in PHASES if p in phases]
        outcome = (f"trap={res.trap.name}" if res.trap is not None
                   else f"result={res.return_value}")
        cells += [f"instructions={comp.program.instruction_count()}",
                  f"steps={res.steps}", outcome]
        rows[backend] = (total, res.steps)
        print("\t".join(cells), file=out)
    (tb, sb), (to, so) = rows["baseline"], rows["opt"]
    print("\t".join(["ratio",
                     f"compile_opt_over_baseline={to / tb if tb else float('inf'):.3f}",
                     f"steps_baseline_over_opt={sb / so if so else float('inf'):.3f}",
                     "baseline_verifies=no"]), file=out)


def build_parser():
    p = argparse.ArgumentParser(prog="silc", description="Stack-IL to register-machine compiler.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="compile and optionally dump an artifact")
    b.add_argument("file")
    b.add_argument("--backend", choices=("opt", "baseline"), default="opt")
    b.add_argument("--dump", choices=("cfg", "dom", "loops", "ddg", "asm", "frame"))
    for k in ("fold", "repo", "dce", "embed"):
        b.add_argument(f"--no-{k}", action="store_true")

    def exec_args(q):
        q.add_argument("file")
        q.add_argument("--entry", required=True)
        q.add_argument("--args", help="comma-separated int32 arguments")
        q.add_argument("--array", help="comma-separated elements of an array "
                       "passed as the first argument")
        q.add_argument("--max-steps", type=int, default=100_000_000)

    r = sub.add_parser("run", help="execute a method")
    exec_args(r)
    r.add_argument("--backend", choices=("opt", "baseline", "interp"), default="opt")
    r.add_argument("--stats", action="store_true")
    for k in ("fold", "repo", "dce", "embed"):
        r.add_argument(f"--no-{k}", action="store_true")

    c = sub.add_parser("compare", help="compile-time and step counts, baseline vs opt")
    exec_args(c)
    c.add_argument("--repeats", type=int, default=REPEATS)
    return p


def main(argv=None, out=None):
    out = out or sys.stdout
    ns = build_parser().parse_args(argv)
    handler = {"build": cmd_build, "run": cmd_run, "compare": cmd_compare}[ns.command]
    try:
        handler(ns, out)
    except (UsageError, SilError, ValueError) as e:
        print(f"silc: error: {e}", file=sys.stderr)
        return EXIT_USER
    except (CompilerBug, MachineFault, AssertionError) as e:
        print(f"silc: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_BUG
    return EXIT_OK


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
