import pytest
from hypothesis import given, settings, strategies as st

from silc.cfg import build_cfg
from silc.ddg import STORE_WINDOW, IrOp, audit_counters, dead_sweep, translate_method
from silc.dumps import dump_ddg
from silc.fuzz import random_unit
from silc.il import parse, unit_index, validate
from silc.loops import number_blocks
from silc.options import DEFAULT

F_VOID = ".method f 0 args 0 locals void\n ret\n"
F_INT = ".method g 0 args 0 locals ret\n ldc 1\n ret\n"


def ddg_of(body, header="2 args 2 locals ret", options=DEFAULT):
    ms = parse(f".method m {header}\n{body}\n{F_VOID}{F_INT}")
    unit = unit_index(ms)
    m = ms[0]
    cfg = build_cfg(m)
    return translate_method(m, cfg, number_blocks(cfg), validate(m, unit), unit, options)


def ops(ddg, bid=0):
    return [(n.op, n.arg) for n in ddg.blocks[bid]]


def node(ddg, op, bid=0):
    [n] = [n for n in ddg.blocks[bid] if n.op is op]
    return n


def test_fold_to_constant():
    d = ddg_of(" ldc 6\n ldc 7\n mul\n ret")
    assert ops(d) == [(IrOp.CONST, 42), (IrOp.RET, None)]


def test_fold_wraps():
    d = ddg_of(" ldc 2147483647\n ldc 1\n add\n ret")
    assert ops(d)[0] == (IrOp.CONST, -2147483648)


@pytest.mark.parametrize("a, b, code", [(5, 0, "DIV_ZERO"),
                                        (-2147483648, -1, "OVERFLOW")])
def test_fold_division_traps(a, b, code):
    d = ddg_of(f" ldc {a}\n ldc {b}\n div\n ret")
    first = next(iter(d.blocks[0]))
    assert first.op is IrOp.THROWTRAP and first.arg.name == code and first.throws
    assert all(n.after_trap for n in d.blocks[0] if n is not first)


@pytest.mark.parametrize("expr", ["ldarg 0\n ldc 0\n add", "ldc 0\n ldarg 0\n add",
                                  "ldarg 0\n ldc 1\n mul", "ldarg 0\n ldc -1\n and",
                                  "ldarg 0\n ldc 0\n shr", "ldarg 0\n ldc 1\n div"])
def test_identities_reuse_operand(expr):
    d = ddg_of(f" {expr}\n ret")
    assert ops(d) == [(IrOp.LDARG, 0), (IrOp.RET, None)]
    assert node(d, IrOp.LDARG).counter == 1


@pytest.mark.parametrize("expr, value", [("ldarg 0\n ldc 0\n mul", 0),
                                         ("ldarg 0\n ldc 0\n and", 0),
                                         ("ldarg 0\n ldc -1\n or", -1)])
def test_absorbing_constants(expr, value):
    d = ddg_of(f" {expr}\n ret")
    assert ops(d) == [(IrOp.CONST, value), (IrOp.RET, None)]


def test_absorbing_keeps_throwing_operand():
    d = ddg_of(" ldarg 0\n ldarg 1\n div\n ldc 0\n mul\n ret")
    assert node(d, IrOp.DIV).throws
    assert ops(d)[-2:] == [(IrOp.CONST, 0), (IrOp.RET, None)]


def test_dup_counts_without_new_node():
    d = ddg_of(" ldarg 0\n dup\n add\n ret")
    x = node(d, IrOp.LDARG)
    assert x.counter == 2 and not x.embeddable
    assert list(node(d, IrOp.ADD).ins) == [x, x]


def test_pop_removes_dead_load():
    d = ddg_of(" ldloc 0\n pop\n ldc 0\n ret")
    assert ops(d) == [(IrOp.CONST, 0), (IrOp.RET, None)]


def test_pop_keeps_throwing_divide():
    d = ddg_of(" ldarg 0\n ldarg 1\n div\n pop\n ldc 0\n ret")
    assert node(d, IrOp.DIV).counter == 0


def test_pop_keeps_call():
    d = ddg_of(" call g\n pop\n ldc 0\n ret")
    assert node(d, IrOp.CALL).arg == "g"


def test_repeated_load_reused():
    d = ddg_of(" ldloc 0\n ldloc 0\n add\n ret")
    x = node(d, IrOp.LDLOC)
    assert x.counter == 2 and not x.embeddable


def test_load_after_store_forwards_value():
    d = ddg_of(" ldc 9\n stloc 0\n ldloc 0\n ret")
    assert [o for o, _ in ops(d)] == [IrOp.CONST, IrOp.STLOC, IrOp.RET]
    assert node(d, IrOp.RET).ins[0] is node(d, IrOp.CONST)


def test_second_store_kills_first():
    d = ddg_of(" ldc 1\n stloc 0\n ldc 2\n stloc 0\n ldc 0\n ret")
    assert ops(d)[:2] == [(IrOp.CONST, 2), (IrOp.STLOC, 0)]


def test_stores_to_different_args_kept():
    d = ddg_of(" ldc 1\n starg 0\n ldc 2\n starg 1\n ldc 0\n ret")
    assert [a for o, a in ops(d) if o is IrOp.STARG] == [0, 1]


def test_fresh_load_per_block():
    d = ddg_of(" ldarg 1\n brtrue a\n ldarg 1\n ret\na: ldarg 1\n ret")
    for bid in d.order:
        assert [a for o, a in ops(d, bid) if o is IrOp.LDARG] == [1]


def test_embeddable_load():
    d = ddg_of(" ldloc 0\n ldc 1\n add\n ret")
    assert node(d, IrOp.LDLOC).embeddable


def test_stale_repo_line_blocks_embedding():
    d = ddg_of(" ldloc 0\n ldc 5\n stloc 0\n ldc 1\n add\n ret")
    assert not node(d, IrOp.LDLOC).embeddable


def _window_body(k):
    return (" ldarg 0\n ldarg 1\n add\n" + " call f\n" * k + " stloc 0\n"
            " ldc 0\n ret")


def test_store_embedded_next_to_producer():
    d = ddg_of(" ldarg 0\n ldarg 1\n add\n stloc 0\n ldc 0\n ret")
    add, st = node(d, IrOp.ADD), node(d, IrOp.STLOC)
    assert add.store_target is st and st.embeddable


def test_store_window_boundary():
    assert STORE_WINDOW == 8
    at = ddg_of(_window_body(8))
    assert node(at, IrOp.ADD).store_target is node(at, IrOp.STLOC)
    past = ddg_of(_window_body(9))
    assert node(past, IrOp.ADD).store_target is None
    assert not node(past, IrOp.STLOC).embeddable


def test_intervening_load_of_same_local_blocks_store_embedding():
    d = ddg_of(" ldarg 0\n ldarg 1\n add\n ldloc 0\n stloc 1\n stloc 0\n ldc 0\n ret")
    assert node(d, IrOp.ADD).store_target is None


def test_array_expansion():
    d = ddg_of(" ldarg 0\n ldc 1\n ldc 2\n stelem\n ldc 0\n ret")
    seq = [o for o, _ in ops(d)]
    assert seq[seq.index(IrOp.CHKNULL):seq.index(IrOp.STELEM_ADDR) + 1] == [
        IrOp.CHKNULL, IrOp.CHKIDX, IrOp.STELEM_ADDR]
    assert len(node(d, IrOp.STELEM_ADDR).ins) == 3


def test_ldlen_keeps_null_check():
    d = ddg_of(" ldc 3\n newarr\n ldlen\n ret", "0 args 0 locals ret")
    assert [o for o, _ in ops(d)] == [IrOp.CONST, IrOp.NEWARR, IrOp.CHKNULL,
                                     IrOp.LDLEN, IrOp.RET]


def test_vindex_expansion(corpus):
    [m] = parse(corpus["vindex"])
    cfg = build_cfg(m)
    d = translate_method(m, cfg, number_blocks(cfg))
    assert [o for o, _ in ops(d)] == [IrOp.LDARG, IrOp.LDARG, IrOp.LDARG, IrOp.MUL,
                                     IrOp.ADD, IrOp.CHKNULL, IrOp.CHKIDX,
                                     IrOp.LDELEM_ADDR, IrOp.RET]
    # b is loaded once and reused; the element load folds into its consumer.
    assert node(d, IrOp.ADD).ins[1] is node(d, IrOp.MUL).ins[1]
    assert node(d, IrOp.LDELEM_ADDR).embeddable


def test_block_boundary_temporaries():
    d = ddg_of(" ldarg 0\n brtrue a\n ldc 1\n br j\na: ldc 2\nj: ret")
    assert d.temp_zone_slots == 1
    join = d.order[-1]
    assert ops(d, join)[0] == (IrOp.LDTMP, 0)
    for bid in d.order[1:-1]:
        seq = [o for o, _ in ops(d, bid)]
        # The STTMP sits directly after its producer.
        assert seq[:2] == [IrOp.CONST, IrOp.STTMP]


def test_no_residue_no_temporaries():
    d = ddg_of("L: ldloc 0\n ldc 1\n sub\n stloc 0\n ldloc 0\n brtrue L\n ldc 0\n ret")
    assert d.temp_zone_slots == 0
    assert all(o not in (IrOp.LDTMP, IrOp.STTMP) for b in d.order for o, _ in ops(d, b))


def test_pass_through_block_elides_temp_pair():
    d = ddg_of(" ldc 7\n ldarg 0\n brtrue a\n br j\na: ldarg 1\n brtrue j\nj: ret")
    # The middle blocks forward slot 0 untouched: no LDTMP/STTMP pair.
    for bid in d.order[1:-1]:
        assert d.blocks[bid].entry_residue == d.blocks[bid].exit_residue == 1
        seq = [o for o, _ in ops(d, bid)]
        assert IrOp.STTMP not in seq and IrOp.LDTMP not in seq


def test_ddg_dump():
    d = ddg_of(" ldc 9\n stloc 0\n ldloc 0\n ret")
    assert dump_ddg(d).splitlines() == [
        "B0: entry_residue=0 exit_residue=0",
        "  n0: CONST 9 [in: ] ctr=2 flags=store=n1",
        "  n1: STLOC 0 [in: n0] ctr=1 flags=embed",
        "  n2: RET [in: n0] ctr=1 flags=-",
    ]


def _translate_all(text, options=DEFAULT):
    ms = parse(text)
    unit = unit_index(ms)
    out = []
    for m in ms:
        cfg = build_cfg(m)
        out.append((m, translate_method(m, cfg, number_blocks(cfg),
                                        validate(m, unit), unit, options)))
    return out


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**7))
def test_ddg_invariants_on_random_units(seed):
    for m, d in _translate_all(random_unit(seed)):
        assert audit_counters(d) == []
        # Throwing nodes stay in source order.
        for bid in d.order:
            offs = [n.offset for n in d.blocks[bid] if n.throws and not n.after_trap]
            assert offs == sorted(offs)
        # No all-constant ALU node survives.
        for n in d.live_nodes():
            if n.op in (IrOp.ADD, IrOp.SUB, IrOp.MUL, IrOp.AND, IrOp.OR, IrOp.XOR):
                assert not all(x.op is IrOp.CONST for x in n.ins)
        residues = [d.blocks[b].exit_residue for b in d.order]
        assert d.temp_zone_slots == max(residues + [0])
        assert dead_sweep(d) == 0


def test_corpus_invariants(corpus):
    for text in corpus.values():
        for m, d in _translate_all(text):
            assert audit_counters(d) == []
            assert dead_sweep(d) == 0
