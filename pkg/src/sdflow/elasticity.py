"""Plane-strain elasticity of an epitaxial film on a rigid substrate.

The film occupies ``0 < x2 < h(x1)`` with ``x1`` periodic of period ``ell``.
The displacement is written ``u = e0 x1 e1 + w`` where ``w`` is periodic and
vanishes on the substrate, so ``u(x1, 0) = (e0 x1, 0)`` and ``grad u`` is
periodic. The top surface is traction free.

Discretization: bilinear quadrilaterals on the terrain-following strip
``(x1, xi * h(x1))``, ``xi`` in [0, 1], with 2x2 Gauss quadrature. Periodicity
is exact by identifying the first and last node columns.
"""

from dataclasses import dataclass
from functools import lru_cache
import json

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import spectral
from .geometry import HeightField, InadmissibleHeightError


class MeshQualityError(ValueError):
    """Raised when an element Jacobian is not positive."""


class SingularSystemError(RuntimeError):
    """Raised when the stiffness factorization fails."""


@dataclass(frozen=True)
class LameMaterial:
    """Isotropic material with Lame coefficients ``mu > 0`` and ``lam > -mu``."""

    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("shear modulus mu must be positive")
        if not self.lam > -self.mu:
            raise ValueError("Lame parameter lambda must exceed -mu")

    @property
    def poisson(self):
        return self.lam / (2.0 * (self.lam + self.mu))

    def voigt(self):
        """Stiffness acting on engineering strains ``(e11, e22, 2 e12)``."""
        mu, lam = self.mu, self.lam
        return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])

    def Q(self, e11, e22, e12):
        """Energy density ``mu |E|^2 + lam/2 (tr E)^2``."""
        return self.mu * (e11**2 + e22**2 + 2 * e12**2) + 0.5 * self.lam * (e11 + e22) ** 2

    def flat_strain(self, e0):
        """Vertical strain ``c`` of the uniformly strained flat film."""
        return -self.lam * e0 / (self.lam + 2 * self.mu)

    def flat_Q(self, e0):
        """Energy density of the flat film, uniform in the film."""
        return float(self.Q(e0, self.flat_strain(e0), 0.0))


_G = 1.0 / np.sqrt(3.0)
_GAUSS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def _dshape(pts):
    """Bilinear shape function derivatives, shape ``(npts, 4 nodes, 2)``."""
    xi, eta = pts[:, 0:1], pts[:, 1:2]
    cx, cy = _CORNERS[:, 0], _CORNERS[:, 1]
    dxi = 0.25 * cx * (1 + cy * eta)
    deta = 0.25 * cy * (1 + cx * xi)
    return np.stack([dxi, deta], axis=-1)


_DN_GAUSS = _dshape(_GAUSS)


@lru_cache(maxsize=16)
def _topology(nx, ny):
    """Element-to-dof map for the periodic strip with the bottom row fixed."""
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()  # element (i, j), column-major in x
    ci = np.stack([i, (i + 1) % nx, (i + 1) % nx, i], axis=1)
    cj = np.stack([j, j, j + 1, j + 1], axis=1)
    node = ci * (ny + 1) + cj  # global node ids incl. the substrate row
    free = cj > 0
    nid = np.where(free, ci * ny + (cj - 1), -1)
    dofs = np.empty((nid.shape[0], 8), dtype=np.int64)
    dofs[:, 0::2] = np.where(free, 2 * nid, -1)
    dofs[:, 1::2] = np.where(free, 2 * nid + 1, -1)
    rows = np.repeat(dofs, 8, axis=1)
    cols = np.tile(dofs, (1, 8))
    keep = (rows >= 0) & (cols >= 0)
    ndof = 2 * nx * ny
    # fixed sparsity pattern; slot[k] is the CSC data position of entry k
    nkeep = int(keep.sum())
    probe = sp.coo_matrix((np.ones(nkeep), (rows[keep], cols[keep])), shape=(ndof, ndof)).tocsc()
    probe.sum_duplicates()
    order = np.lexsort((rows[keep], cols[keep]))
    key_sorted = cols[keep][order] * ndof + rows[keep][order]
    key_csc = np.repeat(np.arange(ndof), np.diff(probe.indptr)) * ndof + probe.indices
    slot = np.full(keep.shape, probe.nnz, dtype=np.int64)  # fixed dofs go to a dump slot
    kslot = np.empty(nkeep, dtype=np.int64)
    kslot[order] = np.searchsorted(key_csc, key_sorted)
    slot[keep] = kslot
    # the same map for element matrices stored as (p, q, a, b, element): components
    # p, q, nodes a, b, with the element index fastest
    ne = nid.shape[0]
    slot_soa = slot.reshape(ne, 4, 2, 4, 2).transpose(2, 4, 1, 3, 0).ravel()
    slot = slot.ravel()
    return {
        "indices": probe.indices,
        "indptr": probe.indptr,
        "slot": slot,
        "slot_soa": slot_soa,
        "ci_t": np.ascontiguousarray(ci.T),
        "eta_t": np.ascontiguousarray(cj.T) / ny,
        "dofs_t": np.ascontiguousarray(dofs.T),
        "nnz": probe.nnz,
        "node": node,
        "ci": ci,
        "cj": cj,
        "i": i,
        "j": j,
        "dofs": dofs,
        "rows": rows[keep],
        "cols": cols[keep],
        "keep": keep,
        "ndof": ndof,
    }


@dataclass(frozen=True, eq=False)
class ElasticSolution:
    """FEM equilibrium of one film profile.

    ``u`` holds full nodal displacements (including the mismatch lift) on the
    ``nx * (ny + 1)`` nodes; ``q_top`` holds ``Q(E(u))`` at the two Gauss
    abscissae of each top edge, extrapolated to the surface.
    """

    ell: float
    nx: int
    ny: int
    nodes: np.ndarray
    cells: np.ndarray
    u: np.ndarray
    x_top: np.ndarray
    q_top: np.ndarray
    w_top: np.ndarray
    energy: float
    energy_quadrature: float
    residual: float
    material: LameMaterial
    e0: float

    def to_json(self):
        return json.dumps(
            {
                "ell": self.ell,
                "nx": self.nx,
                "ny": self.ny,
                "nodes": self.nodes.tolist(),
                "cells": self.cells.tolist(),
                "u": self.u.tolist(),
                "energy": self.energy,
            }
        )


def _gradients(hn, dx, ny, topo):
    """Physical shape gradients ``(gx, gy)`` and Jacobian determinants.

    Arrays are laid out element-last: gradients ``(4 gauss, 4 nodes, ne)``,
    determinants ``(4 gauss, ne)``. On the mapped strip ``x`` depends on the
    reference abscissa only, so the element Jacobian is upper triangular and
    inverts in closed form.
    """
    ye = hn[topo["ci_t"]] * topo["eta_t"]  # corner heights (4, ne)
    dxi, deta = _DN_GAUSS[..., 0], _DN_GAUSS[..., 1]  # (4 gauss, 4 nodes)
    a = 0.5 * dx
    b = dxi @ ye  # dy/dxi at the Gauss points
    c = deta @ ye  # dy/deta
    det = a * c
    gx = dxi[..., None] / a - deta[..., None] * (b / det)[:, None, :]
    gy = deta[..., None] / c[:, None, :]
    return gx, gy, det


def _gauss_sum(a, b):
    # sum over the Gauss axis of outer products, in place to avoid a 4-d temporary
    out = a[0, :, None] * b[0, None]
    for q in range(1, a.shape[0]):
        out += a[q, :, None] * b[q, None]
    return out


def _assemble(h, material, e0, nx, ny):
    curve = h.curve
    if curve.mode != "graph":
        raise ValueError("elasticity is only available for periodic graphs")
    hv = h.values[0]
    if np.min(hv) <= 0:
        raise InadmissibleHeightError("film height must be positive")
    if nx % curve.N:
        raise ValueError(f"nx={nx} must be a multiple of the height grid size {curve.N}")
    ell = float(curve.length[0])
    hn = spectral.resample(hv, nx)
    if np.min(hn) <= 0:
        raise MeshQualityError("interpolated film height is not positive")

    topo = _topology(nx, ny)
    dx = ell / nx
    x = np.arange(nx) * dx
    y = hn[:, None] * (np.arange(ny + 1) / ny)[None, :]
    gx, gy, det = _gradients(hn, dx, ny, topo)
    if np.any(det <= 0):
        raise MeshQualityError("non-positive element Jacobian")
    mu, lam = material.mu, material.lam
    # w_pq[a, b] = sum_gauss det d_p N_a d_q N_b; the isotropic element matrix
    # has blocks K_pq = lam w_pq + mu w_qp + mu delta_pq (w_xx + w_yy)
    gxd, gyd = gx * det[:, None], gy * det[:, None]
    wxx, wyy, wxy = _gauss_sum(gxd, gx), _gauss_sum(gyd, gy), _gauss_sum(gxd, gy)
    wyx = wxy.transpose(1, 0, 2)
    ke = np.empty((2, 2) + wxx.shape)
    ke[0, 0] = (lam + 2 * mu) * wxx + mu * wyy
    ke[1, 1] = (lam + 2 * mu) * wyy + mu * wxx
    ke[0, 1] = lam * wxy + mu * wyx
    ke[1, 0] = lam * wyx + mu * wxy
    eps0 = np.array([e0, 0.0, 0.0])
    sig0 = material.voigt() @ eps0
    fe = np.empty((4, 2, det.shape[1]))  # (node, component, element)
    fe[:, 0] = sig0[0] * np.sum(gxd, axis=0)
    fe[:, 1] = sig0[1] * np.sum(gyd, axis=0)
    fe = fe.reshape(8, -1)

    ndof = topo["ndof"]
    data = np.bincount(topo["slot_soa"], weights=ke.ravel(), minlength=topo["nnz"] + 1)[:-1]
    kmat = sp.csc_matrix((data, topo["indices"], topo["indptr"]), shape=(ndof, ndof))
    dofs = topo["dofs_t"]
    fmask = dofs >= 0
    f = np.bincount(dofs[fmask], weights=fe[fmask], minlength=ndof)
    return {
        "ell": ell, "x": x, "y": y, "topo": topo, "det": det,
        "eps0": eps0, "kmat": kmat, "f": f, "gx": gx, "gy": gy,
    }


def _factorize(kmat):
    try:
        return spla.splu(kmat, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc


def _finish(asm, w, material, e0, nx, ny):
    if not np.all(np.isfinite(w)):
        raise SingularSystemError("non-finite displacement")
    topo, det, eps0, f = asm["topo"], asm["det"], asm["eps0"], asm["f"]
    gx, gy = asm["gx"], asm["gy"]
    ell, x, y = asm["ell"], asm["x"], asm["y"]
    kw = asm["kmat"] @ w
    fnorm = np.linalg.norm(f)
    residual = float(np.linalg.norm(kw + f) / fnorm) if fnorm > 0 else float(np.linalg.norm(kw))
    area = float(np.sum(det))
    energy = float(material.Q(e0, 0.0, 0.0)) * area + float(f @ w) + 0.5 * float(w @ kw)

    dofs = topo["dofs_t"]
    fmask = dofs >= 0
    we = np.where(fmask, w[np.where(fmask, dofs, 0)], 0.0)  # (8, ne), row 2 a + p
    wx, wy = we[0::2][None], we[1::2][None]
    strain = np.stack(
        [np.sum(gx * wx, 1), np.sum(gy * wy, 1), np.sum(gy * wx + gx * wy, 1)]
    ) + eps0[:, None, None]  # (component, gauss, ne)
    qg = material.Q(strain[0], strain[1], 0.5 * strain[2])
    energy_quad = float(np.sum(qg * det))

    # top row: extrapolate Gauss-row strains linearly in eta to the surface
    top = topo["j"] == ny - 1
    st = strain[:, :, top]
    lo = st[:, [0, 1]]  # eta = -g at xi = -g, +g
    hi = st[:, [3, 2]]  # eta = +g at xi = -g, +g
    surf = hi + (hi - lo) * (1.0 - _G) / (2 * _G)
    q_top = material.Q(surf[0], surf[1], 0.5 * surf[2]).T.ravel()
    dx = ell / nx
    xc = (topo["i"][top] + 0.5) * dx
    x_top = (xc[:, None] + np.array([-_G, _G]) * 0.5 * dx).ravel()
    w_top = np.full(x_top.shape, 0.5 * dx)

    nodes = np.stack(np.broadcast_arrays(x[:, None], y), axis=-1).reshape(-1, 2)
    wn = np.zeros((nx, ny + 1, 2))
    wn[:, 1:, :] = w.reshape(nx, ny, 2)
    u = wn.reshape(-1, 2) + np.stack([e0 * nodes[:, 0], np.zeros(len(nodes))], axis=-1)
    cells = topo["ci"] * (ny + 1) + topo["cj"]
    return ElasticSolution(
        ell=ell, nx=nx, ny=ny, nodes=nodes, cells=cells, u=u,
        x_top=x_top, q_top=q_top, w_top=w_top,
        energy=energy, energy_quadrature=energy_quad, residual=residual,
        material=material, e0=e0,
    )


def solve_film(h, material, e0, nx, ny):
    """Elastic equilibrium in the film below the graph of ``h``.

    Parameters
    ----------
    h : HeightField
        Graph-mode heights, all positive.
    material : LameMaterial
    e0 : float
        Mismatch strain imposed on the substrate.
    nx, ny : int
        Elements along and across the film; ``nx`` must be a multiple of the
        height grid size.

    Returns
    -------
    ElasticSolution
    """
    asm = _assemble(h, material, e0, nx, ny)
    w = _factorize(asm["kmat"]).solve(-asm["f"])
    return _finish(asm, w, material, e0, nx, ny)


class FilmSolver:
    """Repeated film solves for slowly varying profiles.

    Keeps the sparse factorization of an earlier stiffness matrix and uses it
    to precondition conjugate gradients; refactors when CG needs more than
    ``max_cg`` iterations. Owned by a single run; not thread safe.
    """

    def __init__(self, material, e0, nx, ny, rtol=1e-13, max_cg=12):
        self.material = material
        self.e0 = e0
        self.nx = nx
        self.ny = ny
        self.rtol = rtol
        self.max_cg = max_cg
        self._lu = None
        self._w = None
        self.factorizations = 0

    def solve(self, h):
        asm = _assemble(h, self.material, self.e0, self.nx, self.ny)
        kmat, rhs = asm["kmat"], -asm["f"]
        w = None
        if self._lu is not None and np.any(rhs):
            w = self._pcg(kmat, rhs)
        if w is None:
            self._lu = _factorize(kmat)
            self.factorizations += 1
            w = self._lu.solve(rhs)
        self._w = w
        return _finish(asm, w, self.material, self.e0, self.nx, self.ny)

    def _pcg(self, kmat, rhs):
        x = self._w.copy()
        r = rhs - kmat @ x
        tol = self.rtol * np.linalg.norm(rhs)
        if np.linalg.norm(r) <= tol:
            return x
        z = self._lu.solve(r)
        p = z.copy()
        rz = r @ z
        for _ in range(self.max_cg):
            kp = kmat @ p
            alpha = rz / (p @ kp)
            x += alpha * p
            r -= alpha * kp
            if np.linalg.norm(r) <= tol:
                return x
            z = self._lu.solve(r)
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        return None


def boundary_Q_trace(sol, n, cutoff=None):
    """Surface values of ``Q(E(u))`` on an ``n``-point grid of the period.

    The top-edge quadrature values are L2-projected onto trigonometric
    polynomials, keeping modes ``|k| <= cutoff`` (default ``n // 3``), and the
    projection is evaluated on the grid ``x_i = i ell / n``.
    """
    if cutoff is None:
        cutoff = n // 3
    cutoff = int(min(cutoff, n // 2))
    k = np.arange(cutoff + 1)
    phase = np.exp(-2j * np.pi * np.outer(k, sol.x_top) / sol.ell)
    coef = phase @ (sol.w_top * sol.q_top) / sol.ell
    spec = np.zeros(n // 2 + 1, dtype=complex)
    spec[: cutoff + 1] = coef * n
    if cutoff == n // 2:
        spec[-1] = 2 * n * coef[-1].real  # Nyquist pair folds onto a real cosine
    return np.fft.irfft(spec, n=n)


def elastic_trace(h, material, e0, nx, ny, cutoff=None):
    """Convenience: solve and return ``(solution, trace on the height grid)``."""
    sol = solve_film(h, material, e0, nx, ny)
    return sol, boundary_Q_trace(sol, h.curve.N, cutoff)


def trace_lipschitz_probe(h1, h2, material, e0, nx=None, ny=32, cutoff=None):
    """Observed ratio ``||q1 - q2||_inf / ||h1 - h2||_C1`` of elastic surface traces."""
    curve = h1.curve
    dh = h2.values[0] - h1.values[0]
    c1 = np.max(np.abs(dh)) + np.max(np.abs(curve.d_sigma(dh[None])[0]))
    if c1 == 0:
        return 0.0
    nx = nx or curve.N
    _, q1 = elastic_trace(h1, material, e0, nx, ny, cutoff)
    _, q2 = elastic_trace(h2, material, e0, nx, ny, cutoff)
    return float(np.max(np.abs(q2 - q1)) / c1)


@dataclass(frozen=True)
class ElasticSetup:
    """Everything needed to evaluate the elastic term for a graph profile.

    ``nx`` defaults to the height grid size and ``trace_cutoff`` (highest
    retained Fourier index of the surface trace) to ``N // 3``.
    """

    material: LameMaterial
    e0: float
    nx: int = None
    ny: int = 32
    trace_cutoff: int = None

    def resolved(self, n):
        nx = self.nx or n
        cutoff = n // 3 if self.trace_cutoff is None else self.trace_cutoff
        return nx, cutoff

    def solve(self, h):
        nx, _ = self.resolved(h.curve.N)
        return solve_film(h, self.material, self.e0, nx, self.ny)

    def trace(self, sol, n):
        return boundary_Q_trace(sol, n, self.resolved(n)[1])

    def solver(self, n):
        nx, _ = self.resolved(n)
        return FilmSolver(self.material, self.e0, nx, self.ny)
