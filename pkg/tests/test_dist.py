import numpy as np
import pytest

from ghostop.boundary import make_csr, make_pure_function, make_simple
from ghostop.config import csr_from_rows
from ghostop.dist import (
    InProcessFabric, exchange, execute_distributed, gather, partition_grid, plan_communication, scatter,
)
from ghostop.region import Region
from ghostop.runtime import GridVar, assemble_dense, execute_local
from ghostop.staging import synthesize_branches
from ghostop.suite import check_ranks

D10 = Region([(0, 10, 1)])
F10 = Region([(-1, 11, 1)])


def circ_halo_program(data, full, zero=False):
    ents = [make_simple("circular", full, tuple(range(data.ndim)), data, exclude=[data], name="circ"),
            make_simple("halo_copy", data, name="halo")]
    return synthesize_branches(ents, [], full, column_space=data, data_region=data)


def test_partition_1d():
    part = partition_grid(D10, (2,), 1, F10)
    assert [r.owned for r in part.ranks] == [Region([(0, 5, 1)]), Region([(5, 10, 1)])]
    assert part.ranks[0].full == Region([(-1, 6, 1)])
    one = partition_grid(D10, (1,), 1, F10)
    assert one.ranks[0].owned == D10 and one.ranks[0].full == F10
    two_d = partition_grid(Region.box((0, 6, 1), (0, 6, 1)), (2, 1), 0)
    assert [r.owned.shape for r in two_d.ranks] == [(3, 6), (3, 6)]


def test_partition_remainder_to_leading_ranks():
    part = partition_grid(Region([(0, 7, 1)]), (3,), 0)
    assert [r.owned.count() for r in part.ranks] == [3, 2, 2]


def test_circular_schedule_two_messages_into_rank0():
    prog = circ_halo_program(D10, F10)
    part = partition_grid(D10, (2,), 1, F10)
    sched = plan_communication(prog, part)
    into0 = sched.recvs(0)
    assert len(into0) == 2
    assert sorted(tuple(c for b in [x.cols] for c in b[0]) for x in into0) == [(5,), (9,)]
    assert plan_communication(prog, partition_grid(D10, (1,), 1, F10)).messages == 0


@pytest.mark.parametrize("ncomp", [1, 3])
def test_exchange_bytes(ncomp):
    prog = synthesize_branches([make_simple("halo_copy", D10)], [], F10, column_space=D10, data_region=D10)
    part = partition_grid(D10, (2,), 1, F10)
    sched = plan_communication(prog, part)
    fab = InProcessFabric(2)
    xs = scatter(part, GridVar(F10, D10, ncomp).randomize(np.random.default_rng(0)))
    exchange(sched, fab, xs)
    assert fab.stats["messages"] == 2
    assert fab.stats["bytes"] == 2 * 8 * ncomp


def test_no_demand_no_messages():
    prog = synthesize_branches([make_simple("zero", F10, exclude=[D10])], [], F10, column_space=D10)
    part = partition_grid(D10, (2,), 1, F10)
    sched = plan_communication(prog, part)
    fab = InProcessFabric(2)
    exchange(sched, fab, scatter(part, GridVar(F10, D10)))
    assert sched.messages == 0 and fab.stats["messages"] == 0


@pytest.mark.parametrize("ncomp", [1, 3])
def test_rank_invariance_circular_zero(ncomp):
    data = Region.box((0, 6, 1), (0, 6, 1))
    full = Region.box((-1, 7, 1), (-1, 7, 1))
    ents = [make_simple("circular", Region.box((-1, 7, 1), (-1, 0, 1)), (0, 1), data, name="c"),
            make_simple("zero", full, exclude=[data, Region.box((-1, 7, 1), (-1, 0, 1))], name="z")]
    prog = synthesize_branches(ents, [], full, column_space=data, data_region=data)
    rep = check_ranks(prog, data, full, (1, 1), ncomp, (1, 2, 4), steps=3)
    assert rep.passed, rep.problems


def test_single_rank_equals_local():
    prog = circ_halo_program(D10, F10)
    x = GridVar(F10, D10).randomize(np.random.default_rng(4))
    y = GridVar(F10, D10)
    execute_local(prog, x, y)
    part = partition_grid(D10, (1,), 1, F10)
    sched = plan_communication(prog, part)
    ys = scatter(part, GridVar(F10, D10))
    execute_distributed(prog, part, sched, InProcessFabric(1), scatter(part, x), ys)
    assert np.array_equal(gather(part, ys, GridVar(F10, D10)).values, y.values)


def test_csr_across_ranks_matches_dense():
    rng = np.random.default_rng(5)
    data = Region.box((0, 6, 1), (0, 6, 1))
    full = Region.box((-1, 7, 1), (-1, 7, 1))
    ring = Region.box((-1, 0, 1), (-1, 7, 1))
    rows = [[(tuple(rng.integers(0, 6, 2)), rng.uniform(-1, 1)) for _ in range(3)] for _ in range(ring.count())]
    ent = make_csr(ring, csr_from_rows(rows, ring, data))
    prog = synthesize_branches([ent], [], full, column_space=data, data_region=data)
    part = partition_grid(data, (2, 2), 1, full)
    sched = plan_communication(prog, part)
    xg = GridVar(full, data).randomize(rng)
    ys = scatter(part, GridVar(full, data))
    execute_distributed(prog, part, sched, InProcessFabric(4), scatter(part, xg), ys)
    out = gather(part, ys, GridVar(full, data))
    dense = assemble_dense([ent], [], full, data)
    want = dense.apply(xg.read(data)[:, 0])
    got = out.values[:, 0]
    assert np.max(np.abs(got[dense.touched] - want[dense.touched])) <= 1e-12
    # the bucket box covers every demanded column while packing only those
    for b in sched.buckets:
        assert b.count <= b.box.count()


def test_pure_function_ranks():
    data = Region.box((0, 5, 1), (0, 5, 1))
    full = Region.box((-1, 6, 1), (-1, 6, 1))
    prog = synthesize_branches([], [make_pure_function(full, 2.5, exclude=[data])], full,
                               column_space=data, data_region=data)
    assert check_ranks(prog, data, full, (1, 1), 1, (1, 2, 4), steps=2).passed
