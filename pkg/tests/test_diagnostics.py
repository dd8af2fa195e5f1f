import numpy as np
import pytest

from sdflow import diagnostics, geometry
from sdflow.anisotropy import Elliptic, Isotropic
from sdflow.diagnostics import (
    DiagnosticsRecord,
    d_growth_excess,
    dissipation_defect,
    holder_seminorm,
    interpolation_suite,
    lp_norm,
    nonincreasing_trend,
    scaling_residual,
    single_mode_equality,
    smoothed,
    sobolev_l2,
    surface_energy,
    total_energy,
)
from sdflow.elasticity import ElasticSetup, LameMaterial
from sdflow.flow import DtPolicy, FlowState, ForcingSpec, run
from sdflow.geometry import HeightField, ReferenceCurve

ISO = Isotropic()


# energies -----------------------------------------------------------------------


@pytest.mark.parametrize("c", [0.0, 0.3])
def test_circle_surface_energy_is_perimeter(c):
    curve = ReferenceCurve.circle(64)
    assert surface_energy(curve, np.full((1, 64), c), ISO) == pytest.approx(2 * np.pi * (1 + c), rel=1e-12)


def test_flat_graph_energies():
    curve = ReferenceCurve.periodic_graph(3.0, 32)
    h = HeightField(curve, np.full(32, 0.5))
    assert surface_energy(curve, h, ISO) == pytest.approx(3.0)
    # the flat normal is e2 and phi(e2) = beta for the elliptic model
    assert surface_energy(curve, h, Elliptic(beta=2.0)) == pytest.approx(6.0)
    mat = LameMaterial(1.0, 1.0)
    total, surf, el = total_energy(curve, h, ISO, ElasticSetup(mat, 0.1, ny=4))
    assert el == pytest.approx(mat.flat_Q(0.1) * 3.0 * 0.5, rel=1e-12)
    assert total == pytest.approx(surf + el)
    assert total_energy(curve, h, ISO)[2] == 0.0


def test_closed_reference_has_no_elastic_part():
    curve = ReferenceCurve.circle(32)
    mat = LameMaterial(1.0, 1.0)
    _, _, el = total_energy(curve, np.zeros((1, 32)), ISO, ElasticSetup(mat, 0.1))
    assert el == 0.0


# records ------------------------------------------------------------------------


def _row(t, **kw):
    base = dict(t=t, energy=1.0, surface=1.0, elastic=0.0, grad_R_l2sq=0.0, grad3_R_l2sq=0.0,
                areas=[1.0, 2.0], D=0.0, perimeter=1.0, h_max=1.0, h_min=0.0, dt=0.1, h_dev_l2=0.0)
    base.update(kw)
    return base


def test_record_csv():
    rec = DiagnosticsRecord()
    rec.append(**_row(0.0))
    rec.append(**_row(0.5, energy=0.25))
    with pytest.raises(ValueError):
        rec.append(**_row(0.5))
    text = rec.to_csv(header="sdflow run\nconfig_hash: abc")
    lines = text.splitlines()
    assert lines[0] == "# sdflow run" and lines[1] == "# config_hash: abc"
    assert lines[2] == "t,energy,grad_R_l2sq,area_0,area_1,D,h_max,h_min,dt"
    assert lines[4].startswith("0.5,0.25,0.0,1.0,2.0")
    assert len(rec) == 2 and rec.array("energy").tolist() == [1.0, 0.25]


def test_dissipation_defect_on_synthetic_identity():
    t = np.linspace(0, 1, 201)
    rec = DiagnosticsRecord()
    for ti in t:
        rec.append(**_row(ti, energy=np.exp(-ti), grad_R_l2sq=np.exp(-ti)))
    defect = dissipation_defect(rec)
    # centered differences are exact up to (dt^2 / 6) |J'''|
    assert np.max(np.abs(defect)) < (t[1] ** 2) / 6 * 1.01
    with pytest.raises(ValueError):
        dissipation_defect(DiagnosticsRecord())


def test_smoothing_and_trend():
    assert np.allclose(smoothed(np.arange(10.0), 5), np.arange(2.0, 8.0))
    noisy = np.exp(-np.linspace(0, 3, 50)) + 1e-2 * (-1) ** np.arange(50)
    assert not np.all(np.diff(noisy) <= 0)
    assert nonincreasing_trend(noisy, window=2)
    assert not nonincreasing_trend(np.linspace(0, 1, 20))
    with pytest.raises(ValueError):
        smoothed([1.0, 2.0], 5)


def _circle_run(dt, T=0.01):
    curve = ReferenceCurve.circle(64)
    s = curve.s[0]
    state = FlowState(HeightField(curve, 0.1 * np.cos(2 * s) + 0.05 * np.sin(3 * s)), ISO)
    return run(state, ForcingSpec.none(), T=T, policy=DtPolicy(fixed=dt)).record


def test_flow_run_diagnostics():
    rec = _circle_run(2e-4)
    assert nonincreasing_trend(rec.energy) and nonincreasing_trend(rec.grad_R_l2sq)
    assert np.all(d_growth_excess(rec) <= 0)
    curve = ReferenceCurve.circle(64)
    s = curve.s[0]
    h0 = 0.1 * np.cos(2 * s) + 0.05 * np.sin(3 * s)
    # zero-mean h0: D(0) = int h^2/2 + h^3/3 ds ~ pi (0.1^2 + 0.05^2) / 2
    assert rec.D[0] == pytest.approx(geometry.anchored_distance(curve, h0, 0.0), rel=1e-12)
    assert rec.D[0] == pytest.approx(np.pi * 0.0125 / 2, rel=1e-2)


def test_dissipation_defect_shrinks_with_dt():
    """The scheme is first order, so the energy identity holds up to O(dt)."""
    rel = []
    for dt in (2e-4, 1e-4):
        rec = _circle_run(dt)
        d = dissipation_defect(rec, normalize=False)
        rel.append(np.max(np.abs(d) / rec.array("grad_R_l2sq")[1:-1]))
    assert rel[0] < 0.03
    assert rel[1] < 0.7 * rel[0]


def test_d_growth_excess_detects_violation():
    rec = DiagnosticsRecord()
    rec.append(**_row(0.0, D=0.0, grad_R_l2sq=1.0, perimeter=1.0))
    rec.append(**_row(0.1, D=1.0, grad_R_l2sq=1.0, perimeter=1.0))
    assert d_growth_excess(rec)[0] == pytest.approx(1.0 - 1.1 * 0.1 - 1e-14)


# interpolation inequalities -----------------------------------------------------------


def test_sobolev_norm_matches_quadrature():
    rng = np.random.default_rng(3)
    c = diagnostics.random_trig_polys(rng, 4, degree=12)
    for order in (0, 1, 2):
        vals = diagnostics._values(c, 256, order)
        assert np.allclose(sobolev_l2(c, order), lp_norm(vals, 2), rtol=1e-12)


def test_values_of_single_mode():
    c = np.zeros(5, dtype=complex)
    c[3] = 0.5
    x = 2 * np.pi * np.arange(64) / 64
    assert np.allclose(diagnostics._values(c, 64), np.cos(3 * x), atol=1e-14)
    assert np.allclose(diagnostics._values(c, 64, 1), -3 * np.sin(3 * x), atol=1e-13)


def test_norms_of_simple_functions():
    x = 2 * np.pi * np.arange(512) / 512
    assert lp_norm(np.ones(512), 4) == pytest.approx((2 * np.pi) ** 0.25)
    # Lipschitz seminorm of sin is max |cos| = 1, approached from below on the grid
    assert holder_seminorm(np.sin(x), 1.0)[0] == pytest.approx(1.0, abs=1e-4)
    # for alpha = 0 the seminorm is the oscillation
    assert holder_seminorm(np.sin(x), 0.0)[0] == pytest.approx(2.0, abs=1e-4)


def test_theta_exponent():
    assert diagnostics.theta_exponent(1, 2, 2) == 0.5
    assert diagnostics.theta_exponent(0, 1, 4) == pytest.approx(0.25)


def test_pure_modes_are_extremal_for_p_two():
    assert single_mode_equality() < 1e-12
    assert scaling_residual() < 1e-10


def test_interpolation_suite_small():
    rep = interpolation_suite(seed=1, trials=100, degree=16)
    assert rep["pass"]
    kinds = {ch["kind"] for ch in rep["checks"]}
    assert kinds == {"inter2", "inter3", "single_mode", "mode_scaling"}
    for ch in rep["checks"]:
        if ch["kind"] == "inter2" and ch["p"] == 2:
            assert ch["C_max"] <= 1.0 + 1e-9
    assert interpolation_suite(seed=1, trials=100, degree=16) == rep
