import pytest

from ghostop.boundary import make_simple
from ghostop.errors import UsageError
from ghostop.pruning import (
    DependenceSet, StencilFootprint, apply_pruning, compute_effective_space, five_point, nine_point,
)
from ghostop.region import Region, RegionSet
from ghostop.staging import synthesize_branches
from ghostop.suite import check_pruning
from test_staging import B1_DATA, three_block_program

DATA = Region.box((0, 5, 1), (0, 5, 1))
FULL = Region.box((-1, 6, 1), (-1, 6, 1))


def ring_program(kind="zero"):
    ent = make_simple(kind, FULL, (0, 1), DATA, exclude=[DATA]) if kind != "zero" else \
        make_simple("zero", FULL, exclude=[DATA])
    return synthesize_branches([ent], [], FULL, column_space=DATA, data_region=DATA)


def brute_union(box_list, fp):
    reads = set()
    for r in fp.read_regions("y"):
        reads |= set(r.enumerate())
    return {c for b in box_list for c in b.enumerate()} & reads


def test_five_point_ring():
    prog = ring_program()
    fp = five_point(DATA)
    deps = compute_effective_space(prog, [fp])
    assert deps.count() == 20
    got = {c for rs in deps.effective for c in rs.enumerate()}
    assert got == brute_union([p.box for p in prog.pieces], fp)
    for corner in [(-1, -1), (-1, 5), (5, -1), (5, 5)]:
        assert corner not in got


def test_center_only_and_nine_point():
    prog = ring_program()
    assert compute_effective_space(prog, [StencilFootprint(DATA, [("y", (0, 0))])]).count() == 0
    assert compute_effective_space(prog, [nine_point(DATA)]).count() == 24


def test_three_block_pruning():
    prog = three_block_program()
    fp = five_point(B1_DATA, axes=[1, 2])
    pruned = apply_pruning(prog, compute_effective_space(prog, [fp]))
    assert prog.cells() == 24 and pruned.cells() == 20
    zeros = [p.box.count() for p in pruned.pieces if p.branch == (2,)]
    assert zeros == [5, 5]
    assert check_pruning(prog, pruned, fp, [-4.0, 1, 1, 1, 1], trials=50) == []


def test_idempotent_and_empty():
    prog = ring_program("circular")
    same = apply_pruning(prog, DependenceSet([RegionSet([p.box]) for p in prog.pieces]))
    assert same.pieces == prog.pieces
    none = apply_pruning(prog, DependenceSet([RegionSet([]) for _ in prog.pieces]))
    assert none.pieces == ()


def test_footprint_must_read_output():
    prog = ring_program()
    with pytest.raises(UsageError):
        compute_effective_space(prog, [StencilFootprint(DATA, [("z", (0, 0))])])


def test_self_full_column_disables():
    ent = make_simple("circular", FULL, (0, 1), DATA, exclude=[DATA])
    prog = synthesize_branches([ent], [], FULL, column_space=FULL, data_region=DATA,
                               input_var="y", output_var="y", full_column=True)
    deps = compute_effective_space(prog, [five_point(DATA)])
    assert deps.disabled and deps.count() == prog.cells()


@pytest.mark.parametrize("kind", ["zero", "circular", "symmetric"])
def test_pruning_soundness_ring(kind):
    prog = ring_program(kind)
    fp = five_point(DATA)
    pruned = apply_pruning(prog, compute_effective_space(prog, [fp]))
    assert check_pruning(prog, pruned, fp, [-4.0, 1, 1, 1, 1], trials=50) == []
