"""Stability of flat strained films.

Analytic side: the Grinfeld functions and the critical film thickness
``a_stable(ell)`` below which the flat profile is strictly stable against
``ell``-periodic perturbations. Numerical side: second variations of the
free energy by symmetric finite differences, and decay-rate fits of flow
trajectories.
"""

from dataclasses import dataclass, field, asdict
import json
import math

import numpy as np
from scipy import optimize

from .geometry import HeightField, ReferenceCurve
from .diagnostics import total_energy


class DegenerateFitError(ValueError):
    """Raised when a decay series reaches the round-off floor."""


def grinfeld_H(s, nu_p):
    """``(s + (3 - 4 nu) sinh s cosh s) / (4 (1 - nu)^2 + s^2 + (3 - 4 nu) sinh^2 s)``.

    Vectorized in ``s``; returns 1 for ``s > 30`` where the deviation from 1
    is below 1e-24.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("s must be non-negative")
    if not nu_p < 0.5:
        raise ValueError("Poisson ratio must be below 1/2")
    b = 3.0 - 4.0 * nu_p
    sc = np.minimum(s, 30.0)
    sh = np.sinh(sc)
    num = sc + b * sh * np.cosh(sc)
    den = 4.0 * (1.0 - nu_p) ** 2 + sc**2 + b * sh**2
    out = np.where(s > 30.0, 1.0, num / den)
    return out if out.ndim else float(out)


def grinfeld_K(s, nu_p):
    """``max_n H(n s) / n`` over positive integers ``n``.

    Since ``H <= 1`` the term for index ``n`` is at most ``1/n``; the scan
    stops once ``1/n`` falls below the running maximum.
    """
    s = np.asarray(s, dtype=float)
    best = np.asarray(grinfeld_H(s, nu_p), dtype=float)
    n = 2
    while True:
        active = (1.0 / n) >= best * (1 - 1e-12)
        if not np.any(active & (s > 0)):
            break
        best = np.maximum(best, np.asarray(grinfeld_H(n * s, nu_p)) / n)
        n += 1
    return best if best.ndim else float(best)


def critical_period(material, e0, model):
    """``ell*``: periods up to this value are stable for every thickness."""
    mu, lam = material.mu, material.lam
    if mu * (mu + lam) <= 0:
        raise ValueError("invalid material: mu (mu + lambda) must be positive")
    if e0 == 0:
        return math.inf
    g2 = float(model.g(np.array([0.0, 1.0])))
    return math.pi / 4 * (2 * mu + lam) * g2 / (e0**2 * mu * (mu + lam))


def a_stable(ell, material, e0, model):
    """Critical thickness of the flat film of period ``ell`` (``inf`` if always stable)."""
    if not ell > 0:
        raise ValueError("period must be positive")
    lstar = critical_period(material, e0, model)
    if ell <= lstar:
        return math.inf
    target = lstar / ell
    nu_p = material.poisson
    f = lambda s: grinfeld_K(s, nu_p) - target
    hi = 1.0
    while f(hi) <= 0:
        hi *= 2.0
    s = optimize.bisect(f, 0.0, hi, xtol=1e-300, rtol=1e-13, maxiter=400)
    return float(s * ell / (2 * math.pi))


def free_energy(h, model, elastic):
    """Surface plus elastic energy of a graph profile."""
    return total_energy(h.curve, h, model, elastic)[0]


def perturbed_profile(curve, a, n, eps):
    """``a + eps cos(2 pi n x / ell)`` shifted to have mean exactly ``a``."""
    x = curve.s[0]
    ell = curve.length[0]
    h = a + eps * np.cos(2 * np.pi * n * x / ell)
    return HeightField(curve, h - np.mean(h) + a)


def second_variation_fd(a, ell, n, model, elastic, eps=None, N=128, extrapolate=True):
    """Second derivative of the energy along ``a + t cos(2 pi n x / ell)`` at t = 0.

    Symmetric difference ``(J(eps) + J(-eps) - 2 J(0)) / eps^2``; with
    ``extrapolate`` the values at ``eps`` and ``eps/2`` are combined to cancel
    the ``O(eps^2)`` term.
    """
    if eps is None:
        eps = 1e-4 * a
    curve = ReferenceCurve.periodic_graph(ell, N)
    j0 = free_energy(HeightField(curve, np.full(N, float(a))), model, elastic)

    def d2(e):
        jp = free_energy(perturbed_profile(curve, a, n, e), model, elastic)
        jm = free_energy(perturbed_profile(curve, a, n, -e), model, elastic)
        return (jp + jm - 2 * j0) / e**2

    if not extrapolate:
        return d2(eps)
    return (4 * d2(eps / 2) - d2(eps)) / 3


def second_variation_zero(ell, n, model, elastic, bracket, N=128, rtol=1e-4, eps_rel=1e-4):
    """Thickness at which the mode-``n`` second variation changes sign (bisection)."""
    f = lambda a: second_variation_fd(a, ell, n, model, elastic, eps=eps_rel * a, N=N)
    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise ValueError("second variation does not change sign on the bracket")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm * flo > 0:
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    r2: float
    samples: int


def fit_decay_rate(t, norms, drop=0.2, floor=1e-13, min_samples=10):
    """Least-squares exponential rate of ``norms(t)``; positive for decay.

    The first ``drop`` fraction of samples is discarded as transient.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(norms, dtype=float)
    start = int(math.floor(drop * len(t)))
    t, y = t[start:], y[start:]
    if len(t) < min_samples:
        raise ValueError(f"need at least {min_samples} samples past the transient")
    if np.any(y < floor):
        raise DegenerateFitError("series reached the round-off floor; truncate it first")
    ly = np.log(y)
    slope, icpt = np.polyfit(t, ly, 1)
    resid = ly - (slope * t + icpt)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return DecayFit(rate=float(-slope), intercept=float(icpt), r2=float(r2), samples=len(t))


@dataclass
class StabilityReport:
    ell: float
    mu: float
    lam: float
    e0: float
    anisotropy: dict
    a: float
    a_stable: float
    nu_p: float
    critical_period: float
    second_variation: dict = field(default_factory=dict)
    fitted_rate: float = None

    def to_dict(self):
        d = asdict(self)
        for key in ("a_stable", "critical_period"):
            if math.isinf(d[key]):
                d[key] = "inf"
        d["stable_analytic"] = self.a < self.a_stable
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def stability_report(ell, a, model, elastic, n_max=8, eps_rel=1e-4, N=128):
    """Analytic threshold plus finite-difference second variations for n = 1..n_max."""
    mat, e0 = elastic.material, elastic.e0
    d2 = {
        str(n): second_variation_fd(a, ell, n, model, elastic, eps=eps_rel * a, N=N)
        for n in range(1, n_max + 1)
    }
    return StabilityReport(
        ell=ell, mu=mat.mu, lam=mat.lam, e0=e0, anisotropy=model.to_config(), a=a,
        a_stable=a_stable(ell, mat, e0, model), nu_p=mat.poisson,
        critical_period=critical_period(mat, e0, model), second_variation=d2,
    )
