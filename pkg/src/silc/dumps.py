"""Text renderings of the intermediate artifacts (``silc build --dump``)."""

from __future__ import annotations

from .target import BRANCHES


def dump_cfg(cfg, name="method"):
    lines = [f'digraph "{name}" {{']
    for b in cfg.blocks:
        tag = " (end)" if b.id == cfg.last_block else ""
        lines.append(f'  B{b.id} [label="B{b.id} [{b.leader},{b.end}){tag}"];')
    for b in cfg.blocks:
        for s in b.successors:
            lines.append(f"  B{b.id} -> B{s};")
    lines.append("}")
    return "\n".join(lines)


def dump_dom(cfg, numbering, idoms):
    lines = []
    for bid in numbering.rpo:
        dfn = numbering.postorder[bid]
        parent = numbering.order[idoms.idom[dfn]]
        lines.append(f"B{bid}: idom=B{parent}")
    return "\n".join(lines)


def dump_loops(tree):
    lines = []

    def walk(loop, depth):
        head = "root" if loop.header is None else f"B{loop.header}"
        body = " ".join(f"B{b}" for b in sorted(loop.body))
        lines.append(f"{'  ' * depth}{head}: {body}")
        for c in loop.children():
            walk(c, depth + 1)

    walk(tree.root, 0)
    return "\n".join(lines)


def _flags(n):
    out = []
    if n.embeddable:
        out.append("embed")
    if n.store_target is not None:
        out.append(f"store=n{n.store_target.id}")
    if n.throws:
        out.append("throws")
    if n.after_trap:
        out.append("after_trap")
    return ",".join(out) or "-"


def dump_ddg(ddg):
    lines = []
    for bid in ddg.order:
        blk = ddg.blocks[bid]
        lines.append(f"B{bid}: entry_residue={blk.entry_residue} "
                     f"exit_residue={blk.exit_residue}")
        for n in blk:
            op = n.op.value if n.arg is None else f"{n.op.value} {_arg(n.arg)}"
            ins = ",".join(f"n{x.id}" for x in n.ins)
            lines.append(f"  n{n.id}: {op} [in: {ins}] ctr={n.counter} "
                         f"flags={_flags(n)}")
    return "\n".join(lines)


def _arg(a):
    if isinstance(a, (tuple, list)):
        return "(" + ",".join(str(x) for x in a) + ")"
    return str(getattr(a, "name", a))


def _labels(mc):
    names = {}
    for bid, pos in sorted(mc.block_start.items(), key=lambda kv: (kv[1], kv[0])):
        names.setdefault(pos, f"B{bid}")
    for k, ins in enumerate(mc.code):
        if ins.block == "epilogue":
            names.setdefault(k, "epilogue")
            break
    for k, ins in enumerate(mc.code):
        if ins.mnem == "TRAPSTUB":
            names.setdefault(k, f"stub.{ins.stub.name}")
    return names


def dump_asm(mc):
    """One instruction per line, branch targets shown as labels."""
    names = _labels(mc)
    lines = []
    for k, ins in enumerate(mc.code):
        text = ins.render()
        if ins.mnem in BRANCHES:
            text = f"{ins.mnem} {names.get(ins.target, ins.target)}"
        tag = ins.block if isinstance(ins.block, str) else f"B{ins.block}"
        lines.append(f"{tag}: {text}")
    return "\n".join(lines)


def dump_frame(frame):
    lines = ["zone\toffset\tsize"]
    for zone, off, size in frame.table():
        lines.append(f"{zone}\t{off}\t{size}")
    return "\n".join(lines)
