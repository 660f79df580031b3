
import numpy as np
import pytest

from ghostop import demo
from ghostop.boundary import make_csr, make_mapping, make_pure_function, make_simple
from ghostop.expr import Idx, Load, Lt, parse_int
from ghostop.region import Region
from ghostop.runtime import valid_mask
from ghostop.staging import DYNAMIC_LOOP, STATIC_FUSED, synthesize_branches
from ghostop.suite import check_structure

B1_FULL = Region.box((1, 2, 1), (-1, 6, 1), (-1, 6, 1))
B1_DATA = Region.box((1, 2, 1), (0, 5, 1), (0, 5, 1))


def three_block_entities():
    left = make_csr(demo.LEFT, demo.left_storage(), name="left")
    right = make_mapping(demo.RIGHT, [parse_int("2"), parse_int("9 - i2"), Idx(1)], name="right")
    zero = make_simple("zero", B1_FULL, exclude=[B1_DATA, demo.RIGHT, demo.LEFT], name="zero")
    return [left, right, zero]


def three_block_program():
    return synthesize_branches(three_block_entities(), [], demo.FULL, column_space=demo.DATA, data_region=demo.DATA)


def test_three_block_pieces():
    prog = three_block_program()
    assert len(prog.pieces) == 4
    assert prog.valid_cells() == {"left": 5, "right": 5, "zero": 14}
    counts = sorted(p.box.count() for p in prog.pieces)
    assert counts == [5, 5, 7, 7]
    zeros = [p.box for p in prog.pieces if p.branch == (2,)]
    assert sorted(b.dims[1] for b in zeros) == [(-1, 0, 1), (5, 6, 1)]
    assert check_structure(prog) == []


def test_three_block_kernels():
    prog = three_block_program()
    modes = {prog.entities[p.branch[0]].name: p.kernel.terms[0].mode for p in prog.pieces}
    assert modes == {"left": DYNAMIC_LOOP, "right": STATIC_FUSED, "zero": STATIC_FUSED}
    zero = next(p for p in prog.pieces if p.branch == (2,))
    assert zero.kernel.terms[0].entries == ()


def test_single_vector_one_piece():
    full = Region.box((0, 4, 1), (0, 4, 1))
    prog = synthesize_branches([], [make_pure_function(full, 1.0)], full)
    assert len(prog.pieces) == 1 and prog.pieces[0].box == full


def test_disjoint_pair_is_refuted():
    full = Region([(-1, 6, 1)])
    a = make_simple("zero", Region([(-1, 0, 1)]), name="a")
    b = make_simple("zero", Region([(5, 6, 1)]), name="b")
    prog = synthesize_branches([a, b], [], full)
    assert len(prog.pieces) == 2
    assert prog.stats["refuted"] >= 1


def test_overlapping_entities_bound():
    rng = np.random.default_rng(0)
    full = Region.box((0, 8, 1), (0, 8, 1))
    for _ in range(20):
        k = int(rng.integers(1, 5))
        ents = []
        for j in range(k):
            lo = rng.integers(0, 6, 2)
            hi = lo + rng.integers(1, 4, 2)
            ents.append(make_simple("zero", Region.box((lo[0], hi[0], 1), (lo[1], hi[1], 1)), name=f"e{j}"))
        prog = synthesize_branches(ents, [], full)
        assert len(prog.branches()) <= 2 ** k - 1
        assert check_structure(prog) == []


def test_circular_folds_to_static():
    data = Region([(0, 5, 1)])
    full = Region([(-1, 6, 1)])
    circ = make_simple("circular", full, 0, data, exclude=[data])
    prog = synthesize_branches([circ], [], full, column_space=data)
    for p in prog.pieces:
        assert p.kernel.matrix_free and p.kernel.affine()
        assert p.kernel.stored_entries(prog.entities) == 0
    text = prog.dump()
    assert "static_fused" in text and "4" in text


def test_symmetric_corners_affine():
    data = Region.box((0, 4, 1), (0, 4, 1))
    full = Region.box((-2, 6, 1), (-2, 6, 1))
    sym = make_simple("symmetric", full, (0, 1), data, exclude=[data])
    prog = synthesize_branches([sym], [], full, column_space=data)
    assert all(p.kernel.affine() for p in prog.pieces)
    assert check_structure(prog) == []


def test_runtime_predicate_rejected():
    from ghostop.boundary import make_custom
    from ghostop.errors import ConfigurationError
    with pytest.raises(ConfigurationError):
        make_custom(Lt(Load("a", Idx(0)), Idx(0)), None)


def test_brute_force_structure_three_block():
    prog = three_block_program()
    full = demo.FULL
    masks = [valid_mask(e, full) for e in prog.entities]
    covered = np.zeros(full.count(), dtype=int)
    for p in prog.pieces:
        for idx in p.box.enumerate():
            covered[full.ordinal(idx)] += 1
    assert covered.max() == 1
    assert np.array_equal(covered == 1, np.logical_or.reduce(masks))
