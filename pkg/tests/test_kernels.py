import numpy as np
import pytest

from ghostop import kernels
from ghostop.runtime import GridVar, compare_against_oracle, execute_local
from ghostop.suite import random_case

needs_compiled = pytest.mark.skipif("compiled" not in kernels.available(), reason="extension not built")


def test_get_backend():
    assert kernels.get_backend("numpy").NAME == "numpy"
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@needs_compiled
@pytest.mark.parametrize("seed", range(20))
def test_backends_bitwise(seed):
    rng = np.random.default_rng(seed)
    case = random_case(rng, step=[1, 2, 4][seed % 3])
    prog = case.prune(case.stage())
    x = GridVar(case.full, case.data, case.ncomp).randomize(rng)
    y0 = GridVar(case.full, case.data, case.ncomp).randomize(rng)
    outs = []
    for name in ("numpy", "compiled"):
        y = y0.copy()
        execute_local(prog, x, y, backend=kernels.get_backend(name))
        outs.append(y.values)
    assert np.array_equal(outs[0], outs[1])


def test_numpy_backend_oracle():
    rng = np.random.default_rng(11)
    case = random_case(rng, ncomp=3)
    rep = compare_against_oracle(case.stage(), trials=5, ncomp=3, backend=kernels.get_backend("numpy"))
    assert rep.passed


@needs_compiled
def test_pack_unpack_agree():
    x = np.random.default_rng(0).uniform(size=30)
    addr = np.array([4, 1, 9], dtype=np.int64)
    outs = []
    for name in ("numpy", "compiled"):
        k = kernels.get_backend(name)
        buf = np.zeros(6)
        k.pack(x, addr, buf, 2)
        z = np.zeros(30)
        k.unpack(z, addr, buf, 2)
        outs.append((buf, z))
    assert np.array_equal(outs[0][0], outs[1][0]) and np.array_equal(outs[0][1], outs[1][1])
