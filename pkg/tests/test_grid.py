import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ergorisk.grid import Grid1D, GridFn, d1, d2, interp, interp_values, solve_tridiag


def test_default_grid_layout():
    g = Grid1D()
    assert g.h == pytest.approx(0.05)
    assert g.nodes[g.zero_index] == 0.0
    assert g.nodes[0] == -30.0 and g.nodes[-1] == 30.0
    assert not g.nodes.flags.writeable


@pytest.mark.parametrize("args", [(-1.0, 1.0, 2), (0.0, 1.0, 11), (-1.0, 2.0, 12), (-1.3, 1.0, 4)])
def test_invalid_grids(args):
    with pytest.raises(ValueError):
        Grid1D(*args)


def test_refined_keeps_nodes():
    g = Grid1D(-3.0, 3.0, 61)
    r = g.refined()
    assert r.h == pytest.approx(g.h / 2)
    np.testing.assert_allclose(r.nodes[::2], g.nodes, atol=1e-13)
    assert r.index_of(0.0) == r.zero_index
    with pytest.raises(ValueError):
        g.index_of(0.05)


@pytest.mark.parametrize("grid", [Grid1D(-1.0, 1.0, 21), Grid1D(-30.0, 30.0, 1201), Grid1D(-2.0, 6.0, 17)])
def test_derivatives_exact_on_polynomials(grid):
    v = grid.nodes
    np.testing.assert_allclose(d1(v, grid.h), 1.0, atol=1e-11)
    np.testing.assert_allclose(d2(v**2, grid.h)[1:-1], 2.0, atol=1e-7)
    # the one-sided end formulas are exact on quadratics too
    np.testing.assert_allclose(d1(v**2, grid.h), 2 * v, atol=1e-9)


def test_derivative_convergence_order():
    errs = []
    for n in (41, 81, 161):
        g = Grid1D(-2.0, 2.0, n)
        errs.append(np.abs(d1(np.sin(g.nodes), g.h) - np.cos(g.nodes)).max())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)


def test_gridfn_wrappers():
    g = Grid1D(-1.0, 1.0, 21)
    f = GridFn(g, g.nodes**2)
    assert isinstance(d1(f), GridFn)
    np.testing.assert_allclose(d2(f).values, 2.0, atol=1e-9)
    with pytest.raises(ValueError):
        GridFn(g, np.full(g.n_nodes, np.nan))
    with pytest.raises(ValueError):
        GridFn(g, np.zeros(3))


def test_identity_solve():
    rhs = np.array([1.0, -2.0, 3.5])
    np.testing.assert_array_equal(solve_tridiag(np.zeros(3), np.ones(3), np.zeros(3), rhs), rhs)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 12), elements=st.floats(-1, 1)),
       arrays(np.float64, 12, elements=st.floats(-10, 10)))
def test_tridiagonal_matches_dense(coef, rhs):
    a, c = coef[0], coef[2]
    b = 3.0 + np.abs(coef[1])  # diagonally dominant
    A = np.diag(b) + np.diag(a[1:], -1) + np.diag(c[:-1], 1)
    np.testing.assert_allclose(solve_tridiag(a, b, c, rhs), np.linalg.solve(A, rhs), atol=1e-12)


def test_singular_system_raises():
    with pytest.raises(np.linalg.LinAlgError):
        solve_tridiag(np.zeros(3), np.array([1.0, 0.0, 1.0]), np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        solve_tridiag(np.zeros(3), np.ones(3), np.zeros(3), np.ones(4))


def test_interpolation():
    g = Grid1D(-1.0, 1.0, 21)
    f = GridFn(g, 3 * g.nodes - 1)
    np.testing.assert_allclose(f(g.nodes), f.values, atol=1e-15)
    assert interp(f, 0.123) == pytest.approx(3 * 0.123 - 1)
    with pytest.raises(ValueError):
        f(1.5)
    # clamped queries extend the end cells linearly
    assert interp_values(g, f.values, 1.5, clamp=True) == pytest.approx(3.5)


@given(st.floats(-1.0, 1.0))
def test_interpolation_exact_for_linear(v):
    g = Grid1D(-1.0, 1.0, 21)
    assert interp_values(g, 2 * g.nodes + 0.5, v) == pytest.approx(2 * v + 0.5, abs=1e-12)


def test_csv_dump(tmp_path):
    g = Grid1D(-1.0, 1.0, 5)
    GridFn(g, g.nodes / 3).to_csv(tmp_path / "f.csv")
    rows = list(csv.reader(open(tmp_path / "f.csv")))
    assert rows[0] == ["v", "value"]
    assert [float(r[1]) for r in rows[1:]] == list(g.nodes / 3)
