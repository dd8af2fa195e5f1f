"""Surface diffusion of normal graphs, with optional forcing or elastic coupling.

The height over the reference evolves by

    (1 + h k_G) dh/dt = d_sigma( J^-1 d_sigma R ),

the parametrized form of ``V = d_sigma sigma R`` on the moving boundary. The
chemical potential is ``R = g(nu) k + f``; in the elastic graph setting
``f`` is the trace of the elastic energy density ``Q(E(u))`` on the free
surface.

Time stepping is semi-implicit: the constant-coefficient part
``-gbar d^4 h`` is treated implicitly in Fourier space and everything else
explicitly, followed by a constant shift per component that restores the
enclosed area exactly.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import geometry, spectral
from .anisotropy import g_of_nu
from .diagnostics import DiagnosticsRecord, total_energy
from .geometry import DegenerateGeometryError, HeightField, InadmissibleHeightError


class StepRejected(RuntimeError):
    """The proposed step leaves the admissible set (geometric breakdown)."""


class NonContractionError(RuntimeError):
    """Picard iterates stopped contracting; the horizon ``T`` is too long."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# forcing -------------------------------------------------------------------


@dataclass(frozen=True)
class ForcingSpec:
    """Source of the non-curvature part ``f`` of the chemical potential.

    kind
        ``"none"``, ``"prescribed"`` or ``"elastic"``.
    func
        For ``"prescribed"``: ``func(s, t, step) -> array`` sampled on the
        reference grid ``s`` of shape ``(m, N)``.
    elastic
        For ``"elastic"``: an :class:`~sdflow.elasticity.ElasticSetup`.
    resolve_every
        Re-solve elasticity every this many steps and reuse the trace in
        between (1 means every step).
    """

    kind: str = "none"
    func: object = None
    elastic: object = None
    resolve_every: int = 1

    def __post_init__(self):
        if self.kind not in ("none", "prescribed", "elastic"):
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        if self.kind == "prescribed" and not callable(self.func):
            raise ValueError("prescribed forcing needs a callable")
        if self.kind == "elastic" and self.elastic is None:
            raise ValueError("elastic forcing needs an ElasticSetup")
        if self.resolve_every < 1:
            raise ValueError("resolve_every must be at least 1")

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def prescribed(cls, func):
        return cls(kind="prescribed", func=func)

    @classmethod
    def table(cls, values):
        """Step-indexed forcing: ``values[n]`` is used during step ``n``.

        Steps past the end of the table reuse the last entry.
        """
        values = np.asarray(values, dtype=float)
        return cls(kind="prescribed", func=lambda s, t, n: values[min(n, len(values) - 1)])

    @classmethod
    def coupled(cls, setup, resolve_every=1):
        return cls(kind="elastic", elastic=setup, resolve_every=resolve_every)


# state ---------------------------------------------------------------------


@dataclass
class FlowState:
    """Mutable state of one run.

    The chemical potential and the elastic solution are cached and dropped
    whenever ``h`` is replaced through :meth:`update`.
    """

    h: HeightField
    model: object
    t: float = 0.0
    target_areas: np.ndarray = None
    steps: int = 0
    dt: float = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.target_areas is None:
            self.target_areas = geometry.enclosed_areas(self.curve, self.h)
        self.target_areas = np.asarray(self.target_areas, dtype=float)

    @property
    def curve(self):
        return self.h.curve

    def update(self, values, t, dt):
        self.h = self.h.with_values(values)
        self.t = t
        self.dt = dt
        self.steps += 1
        self._cache.pop("R", None)
        self._cache.pop("solution", None)

    def copy(self):
        return FlowState(self.h, self.model, self.t, self.target_areas.copy(), self.steps, self.dt)

    def area_drift(self):
        areas = geometry.enclosed_areas(self.curve, self.h)
        return np.abs(areas - self.target_areas) / np.abs(self.target_areas)


def _elastic_part(state, forcing):
    """Surface trace of ``Q(E(u))``, re-solved every ``resolve_every`` steps."""
    setup = forcing.elastic
    cache = state._cache
    n = state.curve.N
    if "solver" not in cache:
        cache["solver"] = setup.solver(n)
    stale = "trace" not in cache or state.steps - cache["trace_step"] >= forcing.resolve_every
    if stale:
        sol = cache["solver"].solve(state.h)
        cache["solution"] = sol
        cache["trace"] = setup.trace(sol, n)[None, :]
        cache["trace_step"] = state.steps
    return cache["trace"]


def forcing_values(state, forcing):
    """The field ``f`` at the current state (zeros for ``kind="none"``)."""
    curve = state.curve
    if forcing.kind == "none":
        return np.zeros((curve.m, curve.N))
    if forcing.kind == "prescribed":
        f = forcing.func(curve.s, state.t, state.steps)
        return np.broadcast_to(np.asarray(f, dtype=float), (curve.m, curve.N))
    if curve.mode != "graph":
        raise ValueError("elastic forcing is only defined for graph references")
    return _elastic_part(state, forcing)


def chemical_potential(state, forcing):
    """``R = g(nu) k + f`` on the reference grid, cached on the state per forcing."""
    if "R" not in state._cache or state._cache.get("R_forcing") is not forcing:
        curve, h = state.curve, state.h
        _, nu = geometry.frame(curve, h)
        g = g_of_nu(state.model, nu)
        k = geometry.curvature(curve, h)
        state._cache["g"] = g
        state._cache["R"] = g * k + forcing_values(state, forcing)
        state._cache["R_forcing"] = forcing
    return state._cache["R"]


def surface_laplacian(curve, h, f):
    """``d_sigma sigma f`` on the graph boundary with the J-weighted mean removed."""
    jac = geometry.jacobian(curve, h)
    v = curve.d_sigma(curve.d_sigma(f) / jac) / jac
    mean = curve.integrate(v * jac) / curve.integrate(jac)
    return v - mean[:, None]


def velocity(state, forcing):
    """Normal velocity ``V = d_sigma sigma R`` (zero J-weighted mean per component)."""
    return surface_laplacian(state.curve, state.h, chemical_potential(state, forcing))


def height_rate(state, forcing):
    """``dh/dt = J V / (1 + h k_G)``."""
    curve, h = state.curve, state.h.values
    jac = geometry.jacobian(curve, h)
    return jac * velocity(state, forcing) / (1.0 + h * curve.curvature)


def stiffness_bound(state, forcing):
    """Per-component ``gbar``: the largest leading coefficient ``g / J^4`` and ``g``."""
    chemical_potential(state, forcing)
    g = state._cache["g"]
    jac = geometry.jacobian(state.curve, state.h)
    return np.maximum(np.max(g, axis=-1), np.max(g / jac**4, axis=-1))


def project_area(curve, values, targets):
    """Shift each component by a constant so its area equals ``targets`` exactly.

    Closed components solve ``(K/2) c^2 + B c + (A(h) - A*) = 0`` with
    ``K = int k_G`` and ``B = int (1 + h k_G)``; graphs solve the linear case.
    """
    values = np.array(values, dtype=float)
    areas = geometry.enclosed_areas(curve, values)
    c2 = 0.5 * curve.integrate(np.broadcast_to(curve.curvature, values.shape))
    c1 = curve.integrate(1.0 + values * curve.curvature)
    c0 = areas - targets
    disc = c1**2 - 4 * c2 * c0
    if np.any(disc < 0):
        raise StepRejected("area projection has no real solution")
    q = -0.5 * (c1 + np.copysign(np.sqrt(disc), c1))
    shift = np.where(c2 == 0, -c0 / c1, c0 / np.where(q == 0, 1.0, q))
    return values + shift[:, None]


def step(state, forcing, dt):
    """Advance ``state`` in place by ``dt``; raises :class:`StepRejected`.

    ``h_hat += dt F_hat / (1 + dt gbar kappa^4)`` with ``F`` the full
    explicit rate, then area projection and the admissibility check. On
    rejection the state is left unchanged.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    curve = state.curve
    try:
        rate = height_rate(state, forcing)
        gbar = stiffness_bound(state, forcing)
    except (DegenerateGeometryError, FloatingPointError) as exc:
        raise StepRejected(str(exc)) from exc
    kappa = np.stack([spectral.wavenumbers(curve.N, L) for L in curve.length])
    denom = 1.0 + dt * gbar[:, None] * kappa**4
    inc = np.fft.irfft(np.fft.rfft(rate, axis=-1) / denom, n=curve.N, axis=-1)
    new = state.h.values + dt * inc
    if not np.all(np.isfinite(new)):
        raise StepRejected("non-finite heights")
    try:
        new = project_area(curve, new, state.target_areas)
        HeightField(curve, new).check_admissible()
    except (InadmissibleHeightError, DegenerateGeometryError) as exc:
        raise StepRejected(str(exc)) from exc
    state.update(new, state.t + dt, dt)
    return state


# runs ----------------------------------------------------------------------


@dataclass(frozen=True)
class DtPolicy:
    """``dt = c_dt (L/N)^2 min(1, 1/gbar)`` unless ``fixed`` is given.

    On a rejected step dt is halved (for the rest of the run) up to
    ``max_halvings`` times before the run reports breakdown.
    """

    c_dt: float = 0.5
    fixed: float = None
    max_halvings: int = 6

    def propose(self, state, forcing):
        if self.fixed is not None:
            return float(self.fixed)
        h2 = np.min(state.curve.spacing) ** 2
        gbar = float(np.max(stiffness_bound(state, forcing)))
        return self.c_dt * h2 * min(1.0, 1.0 / gbar)


@dataclass
class FlowResult:
    state: FlowState
    record: DiagnosticsRecord
    snapshots: list
    status: str = "completed"
    message: str = ""
    rejections: int = 0
    max_area_drift: float = 0.0

    @property
    def completed(self):
        return self.status == "completed"


def sample_diagnostics(state, forcing):
    """One row of the diagnostics record at the current state."""
    curve, h = state.curve, state.h
    R = chemical_potential(state, forcing)
    jac = geometry.jacobian(curve, h)
    elastic = None
    if forcing.kind == "elastic":
        elastic = state._cache.get("solution")
        if elastic is None:
            elastic = state._cache["solver"].solve(h)
    energy, surf, el = total_energy(curve, h, state.model, elastic)
    dR = curve.d_sigma(R)
    d3R = geometry.tangential_derivative(R, curve, h, 3)
    if curve.mode == "graph":
        baseline = state.target_areas[:, None] / curve.length[:, None]
        dev = h.values - baseline
    else:
        baseline = 0.0
        dev = h.values - np.mean(h.values, axis=-1, keepdims=True)
    return dict(
        t=state.t, energy=energy, surface=surf, elastic=el,
        grad_R_l2sq=float(np.sum(curve.integrate(dR**2 / jac))),
        grad3_R_l2sq=float(np.sum(curve.integrate(d3R**2 * jac))),
        areas=geometry.enclosed_areas(curve, h).tolist(),
        D=geometry.anchored_distance(curve, h, baseline),
        perimeter=float(np.sum(geometry.perimeter(curve, h))),
        h_max=float(np.max(h.values)), h_min=float(np.min(h.values)),
        dt=state.dt if state.dt is not None else 0.0,
        h_dev_l2=float(np.sqrt(np.sum(curve.integrate(dev**2)))),
    )


def run(state, forcing, T, policy=None, record_every=1, snapshot_every=None, max_steps=None):
    """Integrate until ``state.t >= T`` or breakdown.

    Parameters
    ----------
    state : FlowState
        Advanced in place.
    forcing : ForcingSpec
    T : float
        Final time.
    policy : DtPolicy, optional
    record_every : int
        Diagnostics stride in steps; the final state is always recorded.
    snapshot_every : int, optional
        Store ``(t, h)`` every this many steps (and at the end).
    max_steps : int, optional
        Safety cap on the number of accepted steps.

    Returns
    -------
    FlowResult
        ``status`` is ``"completed"`` or ``"breakdown"``; a breakdown keeps
        the trajectory up to the last accepted step.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    policy = policy or DtPolicy()
    record = DiagnosticsRecord()
    snapshots = []
    result = FlowResult(state, record, snapshots)
    scale = 1.0
    halvings = 0
    start = state.steps
    tol = 1e-12 * max(1.0, T)

    def keep(final=False):
        n = state.steps - start
        if final or n % record_every == 0:
            if not record.t or state.t > record.t[-1]:
                record.append(**sample_diagnostics(state, forcing))
        if snapshot_every and (final or n % snapshot_every == 0):
            if not snapshots or state.t > snapshots[-1][0]:
                snapshots.append((state.t, state.h.values.copy()))

    keep()
    while state.t < T - tol:
        if max_steps is not None and state.steps - start >= max_steps:
            break
        try:
            dt = policy.propose(state, forcing) * scale
        except (DegenerateGeometryError, ValueError) as exc:
            result.status, result.message = "breakdown", str(exc)
            break
        dt = min(dt, T - state.t)
        try:
            step(state, forcing, dt)
        except StepRejected as exc:
            result.rejections += 1
            halvings += 1
            if halvings > policy.max_halvings:
                result.status, result.message = "breakdown", str(exc)
                break
            scale *= 0.5
            continue
        result.max_area_drift = max(result.max_area_drift, float(np.max(state.area_drift())))
        keep()
    try:
        keep(final=True)
    except (DegenerateGeometryError, ValueError):
        pass
    return result


# Picard coupling -------------------------------------------------------------


def trajectory_distance(traj_a, traj_b, times, curve):
    """Discrete ``L^2(0, T; L^2)`` distance (trapezoid in time) between snapshot stacks."""
    diff2 = np.array([np.sum(curve.integrate((a - b) ** 2)) for a, b in zip(traj_a, traj_b)])
    if len(times) < 2:
        return float(np.sqrt(diff2[0]))
    return float(np.sqrt(np.trapezoid(diff2, times) if hasattr(np, "trapezoid") else np.trapz(diff2, times)))


@dataclass
class PicardReport:
    iterations: int
    distances: list
    ratios: list
    converged: bool
    T: float
    dt: float
    steps: int

    def to_dict(self):
        return {
            "iterations": self.iterations, "distances": self.distances, "ratios": self.ratios,
            "converged": self.converged, "T": self.T, "dt": self.dt, "steps": self.steps,
        }


def _forced_trajectory(h0, model, table, dt, nsteps):
    state = FlowState(h0, model)
    forcing = ForcingSpec.table(table)
    traj = [h0.values.copy()]
    for _ in range(nsteps):
        step(state, forcing, dt)
        traj.append(state.h.values.copy())
    return np.array(traj)


def picard_solve(h0, model, setup, T, dt, tol=1e-8, max_iter=50, snapshot_every=1):
    """Fixed-point coupling ``f -> Q(E(u_F)) o pi^-1`` over forced flows on ``[0, T]``.

    Iterate ``k`` runs the forced flow with the step-indexed forcing
    ``f^(k)[n] = trace(h^(k-1)[n])`` (``f^(0)`` frozen at the initial trace),
    using the same fixed ``dt`` for every iterate. Stops when the distance
    between successive trajectories falls below ``tol``.

    Returns
    -------
    trajectory : ndarray
        Heights at every step of the converged iterate, shape ``(n+1, m, N)``.
    report : PicardReport

    Raises
    ------
    NonContractionError
        If the ratio of successive distances exceeds 1 three times in a row,
        or ``max_iter`` is reached without convergence.
    """
    curve = h0.curve
    if curve.mode != "graph":
        raise ValueError("Picard coupling needs a graph reference")
    nsteps = max(1, int(math.ceil(T / dt - 1e-12)))
    dt = T / nsteps
    n = curve.N
    solver = setup.solver(n)

    def traces(traj):
        return np.array([setup.trace(solver.solve(h0.with_values(hv)), n)[None, :] for hv in traj[:-1]])

    idx = np.arange(0, nsteps + 1, snapshot_every)
    if idx[-1] != nsteps:
        idx = np.append(idx, nsteps)
    times = idx * dt
    table = np.repeat(traces(np.array([h0.values, h0.values])), nsteps, axis=0)
    prev = _forced_trajectory(h0, model, table, dt, nsteps)
    distances, ratios = [], []
    above = 0
    for it in range(1, max_iter + 1):
        table = traces(prev)
        cur = _forced_trajectory(h0, model, table, dt, nsteps)
        d = trajectory_distance(cur[idx], prev[idx], times, curve)
        distances.append(d)
        if len(distances) > 1 and distances[-2] > 0:
            rho = d / distances[-2]
            ratios.append(rho)
            above = above + 1 if rho > 1 else 0
        prev = cur
        report = PicardReport(it, distances, ratios, d < tol, T, dt, nsteps)
        if d < tol:
            return cur, report
        if above >= 3:
            raise NonContractionError("Picard ratios exceeded 1 three times in a row; halve T", report)
    raise NonContractionError(f"no convergence in {max_iter} iterations", report)
