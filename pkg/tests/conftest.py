import pytest

from silc import corpus_text
from silc.interp import interpret
from silc.pipeline import compile_unit, load
from silc.target import execute

BACKENDS = ("interp", "baseline", "opt")

# Lines reported by the acceptance suite, echoed in the terminal summary so
# they survive output capture.
ACCEPTANCE_LINES = []


def outcomes(text, entry, args=(), array=None, max_steps=1_000_000, checked=True):
    """Outcome of ``entry`` under every backend, keyed by backend name."""
    methods, depths = load(text)
    out = {"interp": interpret(methods, entry, args, max_steps, array).outcome()}
    for b in ("baseline", "opt"):
        prog = compile_unit(methods, depths, b, probes=checked and b == "opt").program
        out[b] = execute(prog, entry, args, max_steps, array, checked).outcome()
    return out


def body(mc):
    """Target code of a method without prologue, epilogue and stubs."""
    return [i for i in mc.code if isinstance(i.block, int)]


@pytest.fixture(scope="session")
def corpus():
    return {name: corpus_text(name) for name in ("quicksort", "rc4", "vindex")}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
