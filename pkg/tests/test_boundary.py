import numpy as np
import pytest

from ghostop import demo
from ghostop.boundary import (
    CsrStorage, make_csr, make_custom, make_edge_sync, make_mapping, make_pure_function, make_simple,
    wrap_to_iterator,
)
from ghostop.errors import ConfigurationError, DataError
from ghostop.expr import FALSE, Binding, FromInt, Idx, InArea, ModLit, eval_weight, parse_int
from ghostop.region import Region, subtract
from ghostop.runtime import GridVar, assemble_dense, compare_against_oracle, execute_local, row_entries
from ghostop.staging import synthesize_branches

D5 = Region([(0, 5, 1)])
F5 = Region([(-1, 6, 1)])


def test_circular_and_symmetric_rows():
    circ = make_simple("circular", F5, 0, D5, exclude=[D5])
    sym = make_simple("symmetric", F5, 0, D5, exclude=[D5])
    assert row_entries(circ, (-1,)) == [((4,), 1.0, 0)]
    assert row_entries(sym, (-1,)) == [((0,), 1.0, 0)]
    assert row_entries(circ, (5,)) == [((0,), 1.0, 0)]
    assert row_entries(sym, (5,)) == [((4,), 1.0, 0)]


def test_zero_row_is_empty():
    z = make_simple("zero", F5, exclude=[D5])
    assert row_entries(z, (-1,)) == []


def test_mapping_example():
    right = make_mapping(demo.RIGHT, [parse_int("2"), parse_int("9 - i2"), Idx(1)])
    assert [c for c, _, _ in row_entries(right, (1, 2, 5))] == [(2, 4, 2)]


def test_identity_mapping_is_halo_copy():
    m = make_mapping(D5, [Idx(0)])
    h = make_simple("halo_copy", D5)
    for i in range(5):
        assert row_entries(m, (i,)) == row_entries(h, (i,))


def test_half_weight_mapping_in_dense_oracle():
    m = make_mapping(Region([(-1, 0, 1)]), [ModLit(Idx(0), 5)], 0.5)
    dense = assemble_dense([m], [], F5, D5)
    assert dense.row((-1,)) == {(4,): 0.5}


def test_csr_rows():
    st = CsrStorage(np.array([0, 2]), np.array([3, 4]), np.array([0.5, 0.5]), {(0,): 0}, D5)
    ent = make_csr(Region([(0, 1, 1)]), st)
    assert row_entries(ent, (0,)) == [((3,), 0.5, 0), ((4,), 0.5, 0)]
    st0 = CsrStorage(np.array([0, 0]), np.array([], dtype=np.int64), np.array([]), {(0,): 0}, D5)
    assert row_entries(make_csr(Region([(0, 1, 1)]), st0), (0,)) == []


def test_csr_file_round_trip(tmp_path):
    st = demo.left_storage()
    st.save(tmp_path / "a.bcsr")
    back = CsrStorage.load(tmp_path / "a.bcsr", demo.LEFT, demo.DATA)
    assert np.array_equal(back.row_ptr, st.row_ptr) and np.array_equal(back.data, st.data)
    raw = (tmp_path / "a.bcsr").read_bytes()
    (tmp_path / "bad.bcsr").write_bytes(b"XCSR" + raw[4:])
    with pytest.raises(DataError):
        CsrStorage.load(tmp_path / "bad.bcsr", demo.LEFT, demo.DATA)
    (tmp_path / "short.bcsr").write_bytes(raw[:-8])
    with pytest.raises(DataError):
        CsrStorage.load(tmp_path / "short.bcsr", demo.LEFT, demo.DATA)


def test_shipped_payload_matches_demo(tmp_path):
    from conftest import CONFIGS
    assert (CONFIGS / "fig5_left.bcsr").read_bytes() == demo.write_payload(tmp_path / "p.bcsr").read_bytes()


def test_random_csr_matches_oracle():
    rng = np.random.default_rng(3)
    data = Region.box((0, 6, 1), (0, 6, 1))
    full = Region.box((-1, 7, 1), (-1, 7, 1))
    ring = Region.box((-1, 7, 1), (-1, 0, 1))
    rows = [[(tuple(rng.integers(0, 6, 2)), rng.uniform(-1, 1)) for _ in range(rng.integers(0, 4))]
            for _ in range(ring.count())]
    from ghostop.config import csr_from_rows
    ent = make_csr(ring, csr_from_rows(rows, ring, data))
    prog = synthesize_branches([ent], [], full, column_space=data)
    assert compare_against_oracle(prog, trials=100).passed


def test_edge_sync_rows():
    e = make_edge_sync([[(0, 4), (1, 0)]], ndim=2)
    assert sorted(row_entries(e, (0, 4))) == [((0, 4), 0.5, 0), ((1, 0), 0.5, 0)]
    e3 = make_edge_sync([[(0, 0), (1, 0), (2, 0)]])
    assert [w for _, w, _ in row_entries(e3, (1, 0))] == [1 / 3] * 3
    empty = make_edge_sync([], ndim=2)
    assert empty.is_valid == FALSE
    with pytest.raises(ConfigurationError):
        make_edge_sync([[(0, 0), (1, 0)]], weights=[[0.7, 0.7]])
    with pytest.warns(UserWarning):
        make_edge_sync([[(0, 0), (1, 0)]], weights=[[0.7, 0.7]], strict=False)


def test_pure_function_values():
    v = make_pure_function(Region.box((0, 3, 1), (0, 3, 1)), FromInt(Idx(0)) + FromInt(Idx(1)))
    assert eval_weight(v.value, Binding((1, 2))) == 3.0
    full = Region.box((-1, 6, 1), (-1, 6, 1))
    data = Region.box((0, 5, 1), (0, 5, 1))
    ring = make_pure_function(full, 1.5, exclude=[data])
    prog = synthesize_branches([], [ring], full, column_space=data)
    assert prog.cells() == 24 == sum(b.count() for b in subtract(full, data))
    y = GridVar(full).randomize(np.random.default_rng(0))
    inside = y.read(data).copy()
    execute_local(prog, GridVar(full), y)
    assert np.all(y.read(full)[~np.isin(np.arange(49), y.region_addresses(data))] == 1.5)
    assert np.array_equal(y.read(data), inside)


def test_custom_circular_equivalent():
    f_list = lambda i: [((ModLit(i[0], 5),), 1.0)]
    custom = make_custom(InArea(Region([(-1, 0, 1)])) | InArea(Region([(5, 6, 1)])),
                         wrap_to_iterator(f_list, ndim=1))
    circ = make_simple("circular", F5, 0, D5, exclude=[D5])
    x = GridVar(F5, D5).randomize(np.random.default_rng(1))
    outs = []
    for ent in (custom, circ):
        prog = synthesize_branches([ent], [], F5, column_space=D5)
        y = GridVar(F5, D5)
        execute_local(prog, x, y)
        outs.append(y.values)
    assert np.array_equal(*outs)


def test_custom_false_contributes_nothing():
    c = make_custom(FALSE, wrap_to_iterator(lambda i: [((i[0],), 1.0)], ndim=1))
    prog = synthesize_branches([c], [], F5, column_space=D5)
    assert prog.pieces == ()


def test_custom_dynamic_ell():
    from ghostop.boundary import DynamicRow
    col = np.array([[0, 4, -1], [1, -1, -1]])
    val = np.array([[0.25, 0.75, 0.0], [2.0, 0.0, 0.0]])
    rows = {(-1,): 0, (5,): 1}

    def f_nnz(idx):
        r = rows[idx]
        return int(np.sum(col[r] >= 0)), r

    row = DynamicRow(f_nnz, lambda i, n, r, k: (int(col[r, k]),), lambda i, n, r, k: float(val[r, k]))
    ent = make_custom(InArea(Region([(-1, 0, 1)])) | InArea(Region([(5, 6, 1)])), row)
    prog = synthesize_branches([ent], [], F5, column_space=D5)
    assert compare_against_oracle(prog, trials=20).passed
