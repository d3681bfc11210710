"""silc: a stack-IL to register-machine compiler with a differential test rig.

Pipeline: :func:`silc.il.parse` / :func:`silc.il.validate`, then
:func:`silc.cfg.build_cfg`, :mod:`silc.loops`, :func:`silc.ddg.translate_method`
and :func:`silc.codegen.generate`. :mod:`silc.baseline` is the template
generator, :mod:`silc.interp` the reference interpreter and
:mod:`silc.target` the machine model and emulator.
"""

from importlib import resources

from .il import CompilerBug, ParseError, SilError, ValidationError, parse
from .options import DEFAULT, Options
from .pipeline import compile_unit, load, run
from .semantics import TrapCode

__version__ = "0.1.0"

__all__ = ["CompilerBug", "DEFAULT", "Options", "ParseError", "SilError",
           "TrapCode", "ValidationError", "compile_unit", "corpus_text", "load",
           "parse", "run"]


def corpus_text(name):
    """Source of a bundled corpus program, e.g. ``corpus_text("rc4")``."""
    return resources.files(__package__).joinpath("corpus", f"{name}.sil").read_text()
