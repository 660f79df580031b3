import numpy as np
import pytest

from ghostop.boundary import make_pure_function, make_simple
from ghostop.errors import DataError, OutOfBoundsError
from ghostop.expr import FromInt, Idx
from ghostop.pruning import StencilFootprint, five_point
from ghostop.region import Region
from ghostop.runtime import (
    GridVar, apply_inner_stencil, assemble_dense, compare_against_oracle, execute_local,
)
from ghostop.staging import synthesize_branches
from test_staging import three_block_program

D5 = Region([(0, 5, 1)])
F5 = Region([(-1, 6, 1)])


def test_zero_piece_leaves_rest():
    prog = synthesize_branches([make_simple("zero", Region([(-1, 0, 1)]))], [], F5, column_space=D5)
    x = GridVar(F5, D5)
    y = GridVar(F5, D5).randomize(np.random.default_rng(0))
    before = y.values.copy()
    execute_local(prog, x, y)
    assert y.get((-1,))[0] == 0.0
    assert np.array_equal(y.values[1:], before[1:])


def test_circular_1d():
    prog = synthesize_branches([make_simple("circular", F5, 0, D5, exclude=[D5])], [], F5, column_space=D5)
    x = GridVar(F5, D5).randomize(np.random.default_rng(1))
    y = GridVar(F5, D5)
    execute_local(prog, x, y)
    assert y.get((-1,))[0] == x.get((4,))[0]
    assert y.get((5,))[0] == x.get((0,))[0]


@pytest.mark.parametrize("ncomp", [1, 3])
def test_three_block_oracle(ncomp):
    rep = compare_against_oracle(three_block_program(), trials=100, ncomp=ncomp)
    assert rep.passed and rep.max_error <= 1e-12


def test_vectors_only_exact():
    full = Region.box((0, 4, 1), (0, 4, 1))
    prog = synthesize_branches([], [make_pure_function(full, FromInt(Idx(0)) * 0.1 + 0.3)], full)
    rep = compare_against_oracle(prog, trials=5)
    assert rep.max_error == 0.0


def test_in_place_self_read():
    # y is both input and output: ghosts must read pre-update values
    ent = make_simple("circular", F5, 0, D5, exclude=[D5])
    prog = synthesize_branches([ent], [], F5, column_space=D5, input_var="y", output_var="y")
    y = GridVar(F5, D5).randomize(np.random.default_rng(2))
    x = y.copy()
    execute_local(prog, y, y)
    assert y.get((-1,))[0] == x.get((4,))[0]


def test_oracle_guard():
    from ghostop.errors import UsageError
    big = Region.box((0, 200, 1), (0, 200, 1))
    with pytest.raises(UsageError):
        assemble_dense([], [], big, big)


def test_gridvar_round_trip(tmp_path):
    g = GridVar(Region.box((0, 3, 1), (-1, 4, 2)), ncomp=3, name="q").randomize(np.random.default_rng(0))
    g.dump(tmp_path / "q.gridvar")
    back = GridVar.load(tmp_path / "q.gridvar")
    assert back.same_layout(g) and np.array_equal(back.values, g.values) and back.name == "q"
    with pytest.raises(DataError):
        GridVar.loads(b"nope\n")


def test_out_of_bounds_column():
    from ghostop.boundary import make_mapping
    from ghostop.expr import Lit
    bad = make_mapping(Region([(-1, 0, 1)]), [Lit(7)])
    prog = synthesize_branches([bad], [], F5, column_space=D5)
    with pytest.raises(OutOfBoundsError):
        execute_local(prog, GridVar(F5, D5), GridVar(F5, D5))


def test_inner_stencil():
    data = Region.box((0, 5, 1), (0, 5, 1))
    full = Region.box((-1, 6, 1), (-1, 6, 1))
    x = GridVar(full, data).randomize(np.random.default_rng(0))
    ident = apply_inner_stencil(StencilFootprint(data, [("y", (0, 0))]), [1.0], x)
    assert np.array_equal(ident.read(data), x.read(data))
    x.values[:] = 2.0
    lap = apply_inner_stencil(five_point(data), [-4.0, 1, 1, 1, 1], x)
    assert np.all(lap.read(data) == 0.0)
