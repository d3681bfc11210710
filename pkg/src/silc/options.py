from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Options:
    """Kill switches for the optimizing pipeline."""

    fold: bool = True     # constant folding, algebraic simplification
    repo: bool = True     # load forwarding and dead-store removal
    dce: bool = True      # usage-counter dead-code elimination
    embed: bool = True    # load/store folding into memory operands

    def without(self, *names):
        return replace(self, **{n: False for n in names})


DEFAULT = Options()
