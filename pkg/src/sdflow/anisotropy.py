"""Anisotropic surface energy densities.

Every model is positively one-homogeneous on R^2 minus the origin and exposes
``phi``, ``grad`` and ``hess`` acting on arrays of vectors (last axis of
length 2). The coefficient multiplying curvature in the anisotropic curvature
is ``g(nu) = D^2 phi(nu) tau . tau`` with ``tau = R nu``.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import rotate

DEFAULT_C0 = 1e-3


class EllipticityError(ValueError):
    """Raised when ``g`` drops below half the ellipticity floor."""


def _norm(v):
    return np.linalg.norm(v, axis=-1)


class AnisotropyModel:
    """Base class; subclasses implement ``phi``, ``grad`` and ``hess``."""

    c0 = DEFAULT_C0

    def phi(self, v):
        raise NotImplementedError

    def grad(self, v):
        raise NotImplementedError

    def hess(self, v):
        raise NotImplementedError

    def g(self, nu):
        """``D^2 phi(nu) tau . tau`` without the ellipticity check."""
        nu = np.asarray(nu, dtype=float)
        nu = nu / _norm(nu)[..., None]
        tau = rotate(nu)
        return np.einsum("...i,...ij,...j->...", tau, self.hess(nu), tau)

    def to_config(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Isotropic(AnisotropyModel):
    """``phi(nu) = |nu|``."""

    c0: float = DEFAULT_C0

    def phi(self, v):
        return _norm(np.asarray(v, dtype=float))

    def grad(self, v):
        v = np.asarray(v, dtype=float)
        return v / _norm(v)[..., None]

    def hess(self, v):
        v = np.asarray(v, dtype=float)
        r = _norm(v)[..., None, None]
        n = v / r[..., 0]
        return (np.eye(2) - n[..., :, None] * n[..., None, :]) / r

    def g(self, nu):
        return np.ones(np.shape(nu)[:-1])

    def to_config(self):
        return {"type": "isotropic"}


@dataclass(frozen=True)
class Elliptic(AnisotropyModel):
    """``phi(nu) = sqrt(nu_1^2 + beta^2 nu_2^2)``."""

    beta: float = 1.0
    c0: float = DEFAULT_C0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @property
    def _a(self):
        return np.array([1.0, self.beta**2])

    def phi(self, v):
        v = np.asarray(v, dtype=float)
        return np.sqrt(np.sum(self._a * v**2, axis=-1))

    def grad(self, v):
        v = np.asarray(v, dtype=float)
        return self._a * v / self.phi(v)[..., None]

    def hess(self, v):
        v = np.asarray(v, dtype=float)
        p = self.phi(v)[..., None, None]
        av = self._a * v
        return np.diag(self._a) / p - av[..., :, None] * av[..., None, :] / p**3

    def to_config(self):
        return {"type": "elliptic", "beta": self.beta}


@dataclass(frozen=True, eq=False)
class Tabulated(AnisotropyModel):
    """Trigonometric interpolant of ``phi(cos t, sin t)`` at equispaced angles.

    For a one-homogeneous ``phi(r e(t)) = r p(t)`` the Hessian is
    ``(p + p'') / r`` times the projector on ``e'(t)``, so all derivatives
    come from the exact derivatives of the interpolant.
    """

    theta: np.ndarray
    values: np.ndarray
    c0: float = DEFAULT_C0
    _coef: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        n = th.size
        if vals.shape != th.shape or n < 3:
            raise ValueError("theta and phi tables must have equal length >= 3")
        if not np.allclose(th, th[0] + 2 * np.pi * np.arange(n) / n, atol=1e-9):
            raise ValueError("theta must be equispaced over one full turn")
        if np.any(vals <= 0):
            raise ValueError("phi must be positive")
        # complex coefficients c_k, phi(t) = sum_k c_k exp(i k (t - theta_0))
        ch = np.fft.fft(vals) / n
        k = np.fft.fftfreq(n, d=1.0 / n)
        if n % 2 == 0:
            ch[n // 2] *= 0.5
            ch = np.append(ch, ch[n // 2])
            k = np.append(k, n // 2)
            k[n // 2] = -n // 2
        object.__setattr__(self, "_coef", (k, ch, th[0]))

    def _series(self, t, order):
        k, c, t0 = self._coef
        ph = np.exp(1j * np.multiply.outer(np.asarray(t) - t0, k))
        return np.real(ph @ (c * (1j * k) ** order))

    def _polar(self, v):
        v = np.asarray(v, dtype=float)
        return _norm(v), np.arctan2(v[..., 1], v[..., 0])

    def phi(self, v):
        r, t = self._polar(v)
        return r * self._series(t, 0)

    def grad(self, v):
        r, t = self._polar(v)
        e = np.stack([np.cos(t), np.sin(t)], axis=-1)
        return self._series(t, 0)[..., None] * e + self._series(t, 1)[..., None] * rotate(e)

    def hess(self, v):
        r, t = self._polar(v)
        et = rotate(np.stack([np.cos(t), np.sin(t)], axis=-1))
        w = (self._series(t, 0) + self._series(t, 2)) / r
        return w[..., None, None] * et[..., :, None] * et[..., None, :]

    def g(self, nu):
        _, t = self._polar(nu)
        return self._series(t, 0) + self._series(t, 2)

    def to_config(self):
        return {"type": "table", "theta": np.asarray(self.theta).tolist(), "phi": np.asarray(self.values).tolist()}


def from_config(cfg, c0=DEFAULT_C0):
    """Model from ``{"type": "isotropic"}``, ``{"type": "elliptic", "beta": b}``
    or ``{"type": "table", "theta": [...], "phi": [...]}``."""
    kind = cfg.get("type", "isotropic")
    if kind == "isotropic":
        return Isotropic(c0=c0)
    if kind == "elliptic":
        return Elliptic(beta=float(cfg["beta"]), c0=c0)
    if kind == "table":
        return Tabulated(np.asarray(cfg["theta"]), np.asarray(cfg["phi"]), c0=c0)
    raise ValueError(f"unknown anisotropy type {kind!r}")


def g_of_nu(model, nu):
    """``g(nu)`` for unit vectors ``nu`` (renormalized), with an ellipticity guard."""
    g = np.asarray(model.g(nu))
    if np.any(g < 0.5 * model.c0):
        raise EllipticityError(f"g(nu) = {np.min(g):.3g} below c0/2 = {0.5 * model.c0:.3g}")
    return g


@dataclass(frozen=True)
class EllipticityReport:
    min_g: float
    argmin: tuple
    passed: bool


def check_ellipticity(model, samples=720):
    """Minimum of ``g`` over ``samples`` equispaced directions of S^1."""
    t = 2 * np.pi * np.arange(samples) / samples
    nu = np.stack([np.cos(t), np.sin(t)], axis=-1)
    g = model.g(nu)
    i = int(np.argmin(g))
    return EllipticityReport(float(g[i]), tuple(nu[i].tolist()), bool(g[i] >= model.c0))
