import random

from hypothesis import given, settings, strategies as st

from silc.cfg import BasicBlock, Cfg, build_cfg
from silc.dumps import dump_dom, dump_loops
from silc.fuzz import random_unit
from silc.il import parse
from silc.loops import (back_edges, collect_loop_body, compute_idoms,
                        detect_natural_loops, number_blocks)

from oracles import immediate_dominators, naive_dominators, natural_loop, random_digraph


def graph(succ):
    """A Cfg over block ids 0..n-1 with the given successor lists."""
    blocks = [BasicBlock(b, b, b + 1, list(succ[b])) for b in range(len(succ))]
    for b in blocks:
        for s in b.successors:
            blocks[s].pred_count += 1
    return Cfg(blocks, 0, len(blocks) - 1, list(range(len(blocks))))


def analyse(cfg):
    num = number_blocks(cfg)
    preds = cfg.predecessors()
    idoms = compute_idoms(cfg, num, preds)
    return num, idoms, detect_natural_loops(cfg, num, idoms, preds)


def idom_ids(num, idoms):
    return {b: num.order[idoms.idom[d]] for b, d in num.postorder.items()}


DIAMOND = {0: [1, 2], 1: [3], 2: [3], 3: []}
LOOP = {0: [1], 1: [2], 2: [1, 3], 3: []}


def test_straight_line_numbering():
    num = number_blocks(graph({0: [1], 1: []}))
    assert num.postorder == {1: 0, 0: 1}
    assert num.rpo == [0, 1]


def test_diamond_numbering():
    num = number_blocks(graph(DIAMOND))
    assert num.postorder[0] == 3
    assert num.rpo[0] == 0
    # B3 is finished inside B1's subtree, before B2 is visited.
    assert num.postorder[3] < num.postorder[1] < num.postorder[2]


def test_unreachable_block_not_numbered():
    num = number_blocks(graph({0: [2], 1: [2], 2: []}))
    assert 1 not in num and set(num.postorder) == {0, 2}


def test_diamond_idoms():
    num, idoms, tree = analyse(graph(DIAMOND))
    assert idom_ids(num, idoms) == {0: 0, 1: 0, 2: 0, 3: 0}
    assert tree.loops == [tree.root]


def test_single_loop_idoms_and_tree():
    num, idoms, tree = analyse(graph(LOOP))
    ids = idom_ids(num, idoms)
    assert ids[2] == 1 and ids[3] == 2 and ids[0] == 0
    [loop] = list(tree.root.children())
    assert loop.header == 1 and loop.body == {1, 2}
    assert loop.first_block == 1 and loop.parent is tree.root


def test_root_dominates_itself_with_max_number():
    num, idoms, _ = analyse(graph(LOOP))
    root = num.postorder[0]
    assert idoms.idom[root] == root
    assert root == max(num.postorder.values())


def test_nested_loops():
    succ = {0: [1], 1: [2, 5], 2: [3], 3: [2, 4], 4: [1], 5: []}
    _, _, tree = analyse(graph(succ))
    [outer] = list(tree.root.children())
    [inner] = list(outer.children())
    assert outer.header == 1 and inner.header == 2
    assert inner.body < outer.body
    assert inner.depth == 2
    assert tree.innermost(3) is inner and tree.innermost(4) is outer


def test_two_back_edges_merge():
    succ = {0: [1], 1: [2, 3], 2: [1], 3: [1, 4], 4: []}
    _, _, tree = analyse(graph(succ))
    [loop] = list(tree.root.children())
    assert loop.body == {1, 2, 3}


def test_irreducible_region_has_no_loop():
    succ = {0: [1, 2], 1: [2], 2: [1, 3], 3: []}
    _, _, tree = analyse(graph(succ))
    assert list(tree.root.children()) == []


def test_collect_body_examples():
    preds = {1: [0, 1], 2: [1], 3: [1, 2]}
    assert collect_loop_body(1, 1, preds) == {1}
    assert collect_loop_body(1, 3, preds) == {1, 2, 3}
    # if inside a loop: both arms are reached from the latch.
    preds = {1: [0, 4], 2: [1], 3: [1], 4: [2, 3]}
    assert collect_loop_body(1, 4, preds) == {1, 2, 3, 4}


def _random_case(seed):
    rng = random.Random(seed)
    succ = random_digraph(rng, rng.randint(2, 64))
    cfg = graph(succ)
    num, idoms, tree = analyse(cfg)
    return succ, cfg, num, idoms, tree


def test_dominators_match_naive_oracle():
    for seed in range(500):
        succ, cfg, num, idoms, _ = _random_case(seed)
        dom = naive_dominators(succ, 0)
        assert set(num.postorder) == set(dom)
        assert idom_ids(num, idoms) == immediate_dominators(dom)
        for b, d in num.postorder.items():
            if b != 0:
                assert idoms.idom[d] > d
            assert {num.order[x] for x in idoms.dominators(d)} == dom[b]


def test_back_edge_walk_matches_oracle():
    for seed in range(500):
        succ, cfg, num, idoms, _ = _random_case(seed)
        dom = naive_dominators(succ, 0)
        expected = {(p, h) for p in dom for h in succ[p] if h in dom[p]}
        assert set(back_edges(cfg, num, idoms)) == expected


def test_loop_tree_properties():
    for seed in range(500):
        succ, cfg, num, idoms, tree = _random_case(seed)
        dom = naive_dominators(succ, 0)
        reach = {b: [s for s in ss if s in dom] for b, ss in succ.items() if b in dom}
        loops = tree.loops[1:]
        assert len({l.header for l in loops}) == len(loops)
        for l in loops:
            expected = set()
            for p in reach:
                if l.header in reach[p] and l.header in dom[p]:
                    expected |= natural_loop(reach, l.header, p)
            assert l.body == expected
            assert all(l.header in dom[b] for b in l.body)
            assert l.body <= l.parent.body
        for a in loops:
            for b in loops:
                if a is not b:
                    assert not (a.body & b.body) or a.body < b.body or b.body < a.body


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**7))
def test_random_units(seed):
    for m in parse(random_unit(seed)):
        cfg = build_cfg(m)
        num, idoms, tree = analyse(cfg)
        succ = {b.id: b.successors for b in cfg.blocks}
        assert idom_ids(num, idoms) == immediate_dominators(naive_dominators(succ, 0))
        for l in tree.loops[1:]:
            assert l.header in l.body and l.parent is not None


def test_dumps():
    cfg = graph(LOOP)
    num, idoms, tree = analyse(cfg)
    assert dump_dom(cfg, num, idoms).splitlines() == [
        "B0: idom=B0", "B1: idom=B0", "B2: idom=B1", "B3: idom=B2"]
    assert dump_loops(tree).splitlines() == ["root: B0 B1 B2 B3", "  B1: B1 B2"]
