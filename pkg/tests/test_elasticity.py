import json

import numpy as np
import pytest

from sdflow import elasticity
from sdflow.elasticity import (
    ElasticSetup,
    FilmSolver,
    LameMaterial,
    MeshQualityError,
    boundary_Q_trace,
    elastic_trace,
    solve_film,
    trace_lipschitz_probe,
)
from sdflow.geometry import HeightField, InadmissibleHeightError, ReferenceCurve

MAT = LameMaterial(1.0, 1.0)
E0 = 0.1
ELL = 2 * np.pi


def _film(values, ell=ELL):
    values = np.asarray(values, dtype=float)
    return HeightField(ReferenceCurve.periodic_graph(ell, values.size), values)


def _wavy(n, amp=0.1, ell=ELL):
    x = ell * np.arange(n) / n
    return _film(1.0 + amp * np.cos(2 * np.pi * x / ell) + 0.3 * amp * np.sin(4 * np.pi * x / ell), ell)


# material ---------------------------------------------------------------------


def test_lame_material_values():
    assert MAT.poisson == pytest.approx(0.25)
    assert MAT.flat_strain(E0) == pytest.approx(-E0 / 3)
    # mu (e0^2 + c^2) + lam/2 (e0 + c)^2 with c = -e0/3
    assert MAT.flat_Q(E0) == pytest.approx(0.01 * (1 + 1 / 9) + 0.5 * (0.2 / 3) ** 2)
    assert MAT.flat_Q(E0) == pytest.approx(0.0133333333333, rel=1e-10)
    with pytest.raises(ValueError):
        LameMaterial(0.0, 1.0)
    with pytest.raises(ValueError):
        LameMaterial(1.0, -1.0)


# flat film --------------------------------------------------------------------


def test_flat_film_is_uniformly_strained():
    sol = solve_film(_film(np.ones(32)), MAT, E0, 32, 8)
    c = MAT.flat_strain(E0)
    assert np.allclose(sol.u[:, 0], E0 * sol.nodes[:, 0], atol=1e-13)
    assert np.allclose(sol.u[:, 1], c * sol.nodes[:, 1], atol=1e-13)
    assert np.allclose(sol.q_top, MAT.flat_Q(E0), atol=1e-13)
    assert sol.energy == pytest.approx(MAT.flat_Q(E0) * ELL, rel=1e-12)
    assert sol.residual < 1e-12


def test_flat_trace_matches_closed_form():
    _, q = elastic_trace(_film(np.full(64, 0.7)), MAT, E0, 64, 16)
    assert np.allclose(q, MAT.flat_Q(E0), atol=1e-13)


def test_zero_mismatch_gives_zero_displacement():
    sol = solve_film(_wavy(32), MAT, 0.0, 32, 8)
    assert np.all(sol.u == 0.0)
    assert sol.energy == 0.0
    assert np.all(boundary_Q_trace(sol, 32) == 0.0)


# patch test on a distorted mesh ---------------------------------------------------


def test_patch_test_on_wavy_mesh():
    """The linear field ``(e0 x1, c x2)`` has constant stress, so every node off
    the traction-free top row must be in equilibrium on any admissible mesh."""
    nx, ny = 32, 6
    h = _wavy(32, amp=0.3)
    asm = elasticity._assemble(h, MAT, E0, nx, ny)
    c = 0.37  # any vertical strain; only the top traction depends on it
    y = asm["y"][:, 1:]  # free nodes (i, j >= 1)
    w = np.zeros((nx, ny, 2))
    w[..., 1] = c * y
    res = (asm["kmat"] @ w.ravel() + asm["f"]).reshape(nx, ny, 2)
    assert np.max(np.abs(res[:, :-1])) < 1e-13
    assert np.max(np.abs(res[:, -1])) > 1e-3  # the top row carries the traction


# wavy film ----------------------------------------------------------------------


def test_energy_matches_quadrature_and_residual():
    sol = solve_film(_wavy(64), MAT, E0, 64, 16)
    assert sol.residual < 1e-10
    assert sol.energy == pytest.approx(sol.energy_quadrature, rel=1e-10)
    # relaxation lowers the energy below that of the uniformly strained film
    area = ELL * 1.0
    assert sol.energy < MAT.flat_Q(E0) * area


def test_trace_scales_quadratically_with_mismatch():
    h = _wavy(32)
    _, q1 = elastic_trace(h, MAT, E0, 32, 8)
    _, q2 = elastic_trace(h, MAT, 2 * E0, 32, 8)
    assert np.allclose(q2, 4 * q1, rtol=1e-10, atol=1e-15)


def test_trace_is_translation_covariant():
    n = 64
    base = _wavy(n).values[0]
    _, q = elastic_trace(_film(base), MAT, E0, n, 8)
    _, qs = elastic_trace(_film(np.roll(base, 5)), MAT, E0, n, 8)
    assert np.allclose(qs, np.roll(q, 5), atol=1e-12)


def test_trace_is_mirror_symmetric_for_even_profile():
    n = 64
    x = ELL * np.arange(n) / n
    h = _film(1.0 + 0.15 * np.cos(x))
    _, q = elastic_trace(h, MAT, E0, n, 16)
    mirrored = np.roll(q[::-1], 1)  # q(-x) on the grid
    assert np.allclose(q, mirrored, atol=1e-12)


def test_trace_self_convergence():
    """Differences between successive refinements shrink by at least 3x."""
    n = 32
    h = _wavy(n)
    traces = []
    for k in (1, 2, 4):
        _, q = elastic_trace(h, MAT, E0, k * n, 8 * k, cutoff=n // 3)
        traces.append(q)
    d1 = np.max(np.abs(traces[1] - traces[0]))
    d2 = np.max(np.abs(traces[2] - traces[1]))
    assert d2 < d1 / 3


def test_nyquist_cutoff_is_real():
    sol = solve_film(_wavy(16), MAT, E0, 16, 4)
    q = boundary_Q_trace(sol, 16, cutoff=8)
    assert q.shape == (16,) and np.all(np.isfinite(q))
    # the full-band projection reproduces the mean of the quadrature data
    mean = np.sum(sol.w_top * sol.q_top) / sol.ell
    assert np.mean(q) == pytest.approx(mean, rel=1e-12)


def test_lipschitz_probe_is_bounded():
    h1 = _wavy(64, amp=0.1)
    ratios = []
    for d in (1e-2, 1e-3, 1e-4):
        h2 = _film(h1.values[0] + d * np.cos(2 * h1.curve.s[0]))
        ratios.append(trace_lipschitz_probe(h1, h2, MAT, E0, ny=16))
    assert all(np.isfinite(ratios)) and max(ratios) < 1.0
    # the ratio settles to the linearized value as the perturbation shrinks
    assert abs(ratios[2] - ratios[1]) < 0.1 * abs(ratios[1] - ratios[0]) + 1e-6
    assert trace_lipschitz_probe(h1, h1, MAT, E0) == 0.0


# repeated solves ------------------------------------------------------------------


def test_film_solver_matches_direct_solve():
    n = 32
    solver = FilmSolver(MAT, E0, n, 8)
    base = _wavy(n).values[0]
    for k in range(4):
        h = _film(base + 1e-3 * k * np.sin(base))
        ref = solve_film(h, MAT, E0, n, 8)
        got = solver.solve(h)
        assert np.allclose(got.u, ref.u, atol=1e-12)
        assert got.energy == pytest.approx(ref.energy, rel=1e-12)
    assert solver.factorizations == 1


def test_elastic_setup_defaults():
    setup = ElasticSetup(MAT, E0)
    assert setup.resolved(64) == (64, 21)
    h = _wavy(32)
    sol = setup.solve(h)
    assert sol.nx == 32 and sol.ny == 32
    assert setup.trace(sol, 32).shape == (32,)


# errors -------------------------------------------------------------------------


def test_errors():
    with pytest.raises(ValueError):
        solve_film(HeightField(ReferenceCurve.circle(32), np.zeros(32)), MAT, E0, 32, 4)
    with pytest.raises(InadmissibleHeightError):
        solve_film(_film(np.linspace(-0.1, 1.0, 32)), MAT, E0, 32, 4)
    with pytest.raises(ValueError):
        solve_film(_wavy(32), MAT, E0, 48, 4)
    # a positive grid profile whose band-limited interpolant dips below zero
    spike = np.full(32, 1e-3)
    spike[0] = 5.0
    with pytest.raises(MeshQualityError):
        solve_film(_film(spike), MAT, E0, 64, 4)


def test_solution_json():
    sol = solve_film(_film(np.ones(16)), MAT, E0, 16, 2)
    doc = json.loads(sol.to_json())
    assert doc["nx"] == 16 and len(doc["u"]) == 16 * 3
    assert doc["energy"] == pytest.approx(MAT.flat_Q(E0) * ELL)
