"""Reference curves and normal-graph boundaries.

A boundary is stored as a height ``h`` over a reference curve, the point at
parameter ``s`` being ``x(s) + h(s) * nu_G(s)``. Two kinds of reference are
supported:

* ``closed``: one or more smooth Jordan curves sampled uniformly in arclength,
  counterclockwise, with outer normal ``nu_G`` and tangent ``tau_G = R nu_G``
  (``R`` the counterclockwise rotation by pi/2).
* ``graph``: the flat baseline ``x2 = 0`` of an ``ell``-periodic film, with
  ``nu_G = e2``. Then ``tau_G = -e1`` so arclength along ``tau_G`` runs
  against the grid parameter ``x1``.

Heights are arrays of shape ``(m, N)`` (``m`` components, ``N`` nodes); graph
mode always has ``m == 1``.
"""

from dataclasses import dataclass, field
import json

import numpy as np

from . import spectral


class DegenerateGeometryError(ValueError):
    """Raised when ``1 + h k_G`` is not positive somewhere on the grid."""


class InadmissibleHeightError(ValueError):
    """Raised when a height field leaves the admissible class."""


def rotate(v):
    """Counterclockwise rotation by pi/2 of vectors stored in the last axis."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass(frozen=True, eq=False)
class ReferenceCurve:
    """Sampled reference geometry over which heights are measured.

    Use the constructors :meth:`periodic_graph`, :meth:`circle`,
    :meth:`from_samples` or :meth:`combine` rather than the raw initializer.
    """

    mode: str
    s: np.ndarray  # (m, N) parameter values
    length: np.ndarray  # (m,) period of the parameter
    normal: np.ndarray  # (m, N, 2)
    curvature: np.ndarray  # (m, N)
    points: np.ndarray  # (m, N, 2)
    eta_bar: float
    ref_area: np.ndarray  # (m,)
    orientation: int  # d(arclength along tau_G)/d(parameter)
    _dk: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.s.shape[-1]
        if n < 16 or n % 2:
            raise ValueError(f"grid size must be even and >= 16, got {n}")
        if not np.all(np.isfinite(self.curvature)):
            raise ValueError("reference curvature must be finite")
        if self.eta_bar <= 0:
            raise ValueError("eta_bar must be positive")
        kmax = np.max(np.abs(self.curvature))
        if kmax > 0 and self.eta_bar > 1.0 / kmax * (1 + 1e-12):
            raise ValueError(
                f"eta_bar={self.eta_bar} exceeds 1/max|k_G|={1.0 / kmax}"
            )
        dk = self.orientation * spectral.derivative(self.curvature, self.length)
        object.__setattr__(self, "_dk", dk)

    # constructors ---------------------------------------------------------

    @classmethod
    def periodic_graph(cls, ell, n):
        """Flat baseline of period ``ell`` sampled at ``n`` nodes."""
        x = np.arange(n) * (ell / n)
        normal = np.zeros((1, n, 2))
        normal[..., 1] = 1.0
        points = np.stack([x, np.zeros(n)], axis=-1)[None]
        return cls(
            mode="graph",
            s=x[None],
            length=np.array([float(ell)]),
            normal=normal,
            curvature=np.zeros((1, n)),
            points=points,
            eta_bar=np.inf,
            ref_area=np.zeros(1),
            orientation=-1,
        )

    @classmethod
    def circle(cls, n, radius=1.0, center=(0.0, 0.0), eta_bar=None):
        """Counterclockwise circle sampled uniformly in arclength."""
        theta = 2 * np.pi * np.arange(n) / n
        nu = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        pts = np.asarray(center, dtype=float) + radius * nu
        return cls.from_samples(
            s=radius * theta,
            normal=nu,
            curvature=np.full(n, 1.0 / radius),
            points=pts,
            length=2 * np.pi * radius,
            eta_bar=eta_bar,
        )

    @classmethod
    def from_samples(cls, s, normal, curvature, points=None, length=None, eta_bar=None):
        """Closed single-component reference from arclength samples.

        ``points`` may be omitted; positions are then recovered by spectral
        integration of the tangent ``R nu``, up to a translation.
        """
        s = np.asarray(s, dtype=float)
        n = s.size
        normal = np.asarray(normal, dtype=float).reshape(n, 2)
        normal = normal / np.linalg.norm(normal, axis=-1, keepdims=True)
        curvature = np.asarray(curvature, dtype=float).reshape(n)
        if length is None:
            length = n * (s[1] - s[0])
        ds = length / n
        if not np.allclose(np.diff(s), ds, rtol=1e-8, atol=1e-12 * length):
            raise ValueError("closed reference samples must be uniform in arclength")
        tau = rotate(normal)
        if points is None:
            th = np.fft.rfft(tau, axis=0)
            kappa = spectral.wavenumbers(n, length)
            mult = np.zeros_like(kappa, dtype=complex)
            mult[1:] = 1.0 / (1j * kappa[1:])
            points = np.fft.irfft(th * mult[:, None], n=n, axis=0)
        points = np.asarray(points, dtype=float).reshape(n, 2)
        # shoelace-free area: (1/2) * integral of x . nu over the curve
        area = 0.5 * np.sum(np.einsum("ij,ij->i", points, normal)) * ds
        if area <= 0:
            raise ValueError("closed reference must be counterclockwise with outer normal")
        kmax = np.max(np.abs(curvature))
        if eta_bar is None:
            eta_bar = 0.9 / kmax
        return cls(
            mode="closed",
            s=s[None],
            length=np.array([float(length)]),
            normal=normal[None],
            curvature=curvature[None],
            points=points[None],
            eta_bar=float(eta_bar),
            ref_area=np.array([area]),
            orientation=1,
        )

    @classmethod
    def combine(cls, curves, eta_bar=None):
        """Stack closed references with equal ``N`` into one multi-component curve."""
        curves = list(curves)
        if any(c.mode != "closed" for c in curves):
            raise ValueError("only closed references can be combined")
        if len({c.N for c in curves}) != 1:
            raise ValueError("components must share the grid size")
        if eta_bar is None:
            eta_bar = min(c.eta_bar for c in curves)
        cat = lambda name: np.concatenate([getattr(c, name) for c in curves])
        return cls(
            mode="closed",
            s=cat("s"),
            length=cat("length"),
            normal=cat("normal"),
            curvature=cat("curvature"),
            points=cat("points"),
            eta_bar=float(eta_bar),
            ref_area=cat("ref_area"),
            orientation=1,
        )

    @classmethod
    def from_json(cls, doc):
        """Build from a JSON document (str, path-like or parsed mapping).

        Graph: ``{"mode": "graph", "N": 128, "ell": 6.28}``.
        Closed: ``{"mode": "closed", "points": [{"s": .., "nu": [..], "k": ..,
        "x": [..]}, ...], "eta_bar": ..}`` with ``x`` optional; a list of such
        point lists under ``"components"`` gives several components.
        """
        if isinstance(doc, str) and not doc.lstrip().startswith("{"):
            with open(doc, encoding="utf-8") as fh:
                doc = json.load(fh)
        elif isinstance(doc, str):
            doc = json.loads(doc)
        mode = doc["mode"]
        if mode == "graph":
            return cls.periodic_graph(float(doc["ell"]), int(doc["N"]))
        if mode != "closed":
            raise ValueError(f"unknown reference mode {mode!r}")
        comps = doc.get("components") or [doc["points"]]
        curves = []
        for pts in comps:
            s = [p["s"] for p in pts]
            nu = [p["nu"] for p in pts]
            k = [p["k"] for p in pts]
            xs = [p["x"] for p in pts] if all("x" in p for p in pts) else None
            curves.append(cls.from_samples(s, nu, k, points=xs, length=doc.get("length")))
        if "N" in doc and any(c.N != int(doc["N"]) for c in curves):
            raise ValueError("declared N does not match the number of points")
        return cls.combine(curves, eta_bar=doc.get("eta_bar"))

    def to_json(self):
        if self.mode == "graph":
            return {"mode": "graph", "N": self.N, "ell": float(self.length[0])}
        comps = [
            [
                {"s": float(s), "nu": nu.tolist(), "k": float(k), "x": x.tolist()}
                for s, nu, k, x in zip(self.s[c], self.normal[c], self.curvature[c], self.points[c])
            ]
            for c in range(self.m)
        ]
        return {"mode": "closed", "N": self.N, "eta_bar": self.eta_bar, "components": comps}

    # derived quantities ---------------------------------------------------

    @property
    def N(self):
        return self.s.shape[-1]

    @property
    def m(self):
        return self.s.shape[0]

    @property
    def tangent(self):
        return rotate(self.normal)

    @property
    def spacing(self):
        return self.length / self.N

    @property
    def curvature_derivative(self):
        """Arclength derivative of ``k_G`` along ``tau_G``."""
        return self._dk

    def d_sigma(self, f, order=1):
        """Arclength derivative along ``tau_G`` on the reference grid."""
        return self.orientation**order * spectral.derivative(f, self.length, order)

    def integrate(self, f):
        """Per-component integral over the reference with the periodic trapezoid rule."""
        return np.sum(f, axis=-1) * self.spacing


@dataclass(frozen=True, eq=False)
class HeightField:
    """Heights over a reference curve, shape ``(m, N)``.

    Construction does not enforce admissibility; call :meth:`check_admissible`
    (the flow does so after every step).
    """

    curve: ReferenceCurve
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.curve.m, self.curve.N)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values):
        return HeightField(self.curve, values)

    def check_admissible(self):
        v = self.values
        if self.curve.mode == "closed":
            hmax = np.max(np.abs(v))
            if not hmax < self.curve.eta_bar / 2:
                raise InadmissibleHeightError(
                    f"max|h|={hmax:.6g} violates max|h| < eta_bar/2 = {self.curve.eta_bar / 2:.6g}"
                )
        else:
            if not np.min(v) > 0:
                raise InadmissibleHeightError(f"film touches the substrate: min h = {np.min(v):.6g}")
        return self


def _unpack(curve, h):
    if isinstance(h, HeightField):
        return h.values
    return np.broadcast_to(np.asarray(h, dtype=float), (curve.m, curve.N))


def _stretch(curve, h):
    a = 1.0 + h * curve.curvature
    if np.any(a <= 0):
        raise DegenerateGeometryError("1 + h k_G <= 0: height exceeds the local radius of curvature")
    return a


def jacobian(curve, h):
    """Tangential Jacobian ``sqrt((1 + h k_G)^2 + (d_sigma h)^2)`` of the normal-graph map."""
    h = _unpack(curve, h)
    a = _stretch(curve, h)
    return np.hypot(a, curve.d_sigma(h))


def frame(curve, h):
    """Unit tangent and outer normal of the graph boundary, each ``(m, N, 2)``."""
    h = _unpack(curve, h)
    a = _stretch(curve, h)
    dh = curve.d_sigma(h)
    jac = np.hypot(a, dh)
    tg, ng = curve.tangent, curve.normal
    tau = (a[..., None] * tg + dh[..., None] * ng) / jac[..., None]
    nu = (-dh[..., None] * tg + a[..., None] * ng) / jac[..., None]
    return tau, nu


def curvature(curve, h):
    """Curvature of the graph boundary pulled back to the reference grid."""
    h = _unpack(curve, h)
    a = _stretch(curve, h)
    kg = curve.curvature
    dh = curve.d_sigma(h)
    ddh = curve.d_sigma(h, 2)
    jac = np.hypot(a, dh)
    num = -ddh * a + 2 * dh**2 * kg + a**2 * kg + h * dh * curve.curvature_derivative
    return num / jac**3


def tangential_derivative(f, curve, h, order=1):
    """Apply ``f -> (1/J) d_sigma f`` ``order`` times (arclength derivative on the boundary)."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    jac = jacobian(curve, h)
    out = np.broadcast_to(np.asarray(f, dtype=float), jac.shape)
    for _ in range(order):
        out = curve.d_sigma(out) / jac
    return out


def perimeter(curve, h):
    """Per-component length of the graph boundary."""
    return curve.integrate(jacobian(curve, h))


def enclosed_areas(curve, h):
    """Per-component enclosed area (closed) or film area ``int h dx`` (graph)."""
    h = _unpack(curve, h)
    if curve.mode == "graph":
        return curve.integrate(h)
    _stretch(curve, h)
    return curve.ref_area + curve.integrate(h + 0.5 * curve.curvature * h**2)


def anchored_distance(curve, h, baseline=0.0):
    """Integral of the distance to the reference over the symmetric difference.

    Evaluated exactly in tubular coordinates, ``sum int (h^2/2 + k_G h^3/3)``
    with ``h`` measured from ``baseline`` (graph mode: the flat profile at that
    height).
    """
    h = _unpack(curve, h) - baseline
    _stretch(curve, h)
    return float(np.sum(curve.integrate(0.5 * h**2 + curve.curvature * h**3 / 3.0)))


def positions(curve, h):
    """Physical boundary points ``x + h nu_G``, shape ``(m, N, 2)``."""
    h = _unpack(curve, h)
    return curve.points + h[..., None] * curve.normal
