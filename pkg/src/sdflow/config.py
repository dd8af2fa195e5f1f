"""Simulation configuration: strict schema, defaults and model construction.

Configs are YAML or JSON documents with the blocks ``geometry``,
``anisotropy``, ``material``, ``flow``, ``elasticity``, ``stability``,
``output`` and ``seed``. Unknown keys are rejected, and every violation is
reported with the dotted path of the offending key.
"""

import hashlib
import json
import math
import re
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import anisotropy
from .elasticity import ElasticSetup, LameMaterial
from .geometry import HeightField, ReferenceCurve

LAMBDA_OVER_MU_MAX = 50.0


class ConfigError(ValueError):
    """Invalid configuration. ``errors`` lists ``(path, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"{p}: {m}" for p, m in self.errors))


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Mode(_Block):
    n: int = Field(ge=1)
    amp: float
    phase: float = 0.0


class CircleSpec(_Block):
    radius: float = Field(default=1.0, gt=0)
    center: List[float] = [0.0, 0.0]


class InitialSpec(_Block):
    """``h0 = a + sum amp cos(2 pi n s / L + phase) + noise * N(0, 1)``."""

    a: float = 0.0
    modes: List[Mode] = []
    noise: float = Field(default=0.0, ge=0)


class GeometryConfig(_Block):
    mode: Literal["graph", "closed"] = "graph"
    N: int = 128
    ell: Optional[float] = Field(default=None, gt=0)
    circle: Optional[CircleSpec] = None
    reference_file: Optional[str] = None
    eta_bar: Optional[float] = None
    initial: InitialSpec = InitialSpec()

    @field_validator("N")
    @classmethod
    def _power_of_two(cls, v):
        if v < 16 or v & (v - 1):
            raise ValueError("N must be a power of two >= 16 (even grid for spectral derivatives)")
        return v

    @model_validator(mode="after")
    def _reference(self):
        if self.mode == "graph":
            if self.ell is None or not self.ell > 0:
                raise ValueError("graph mode needs a positive period ell")
            if self.circle is not None or self.reference_file is not None:
                raise ValueError("circle/reference_file only apply to closed mode")
        else:
            if self.ell is not None:
                raise ValueError("ell only applies to graph mode")
            if (self.circle is None) == (self.reference_file is None):
                raise ValueError("closed mode needs exactly one of circle or reference_file")
        if self.eta_bar is not None and not self.eta_bar > 0:
            raise ValueError("eta_bar must be positive")
        return self


class AnisotropyConfig(_Block):
    type: Literal["isotropic", "elliptic", "table"] = "isotropic"
    beta: Optional[float] = None
    theta: Optional[List[float]] = None
    phi: Optional[List[float]] = None
    c0: float = Field(default=anisotropy.DEFAULT_C0, gt=0)

    @model_validator(mode="after")
    def _fields(self):
        if self.type == "elliptic" and (self.beta is None or not self.beta > 0):
            raise ValueError("elliptic anisotropy needs beta > 0")
        if self.type != "elliptic" and self.beta is not None:
            raise ValueError("beta only applies to the elliptic model")
        if self.type == "table":
            if self.theta is None or self.phi is None:
                raise ValueError("table anisotropy needs theta and phi")
        elif self.theta is not None or self.phi is not None:
            raise ValueError("theta/phi only apply to the table model")
        model = self.build()
        rep = anisotropy.check_ellipticity(model)
        if not rep.passed:
            raise ValueError(f"not strongly elliptic: min g = {rep.min_g:.4g} < c0 = {self.c0:.4g}")
        return self

    def build(self):
        cfg = self.model_dump(exclude_none=True)
        return anisotropy.from_config(cfg, c0=cfg.pop("c0"))


class MaterialConfig(_Block):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    mu: float = Field(default=1.0, gt=0)
    lam: float = Field(default=1.0, alias="lambda")
    e0: float = 0.0

    @model_validator(mode="after")
    def _lame(self):
        if not self.lam > -self.mu:
            raise ValueError("Lame coefficients need lambda > -mu")
        if self.lam > LAMBDA_OVER_MU_MAX * self.mu:
            raise ValueError(f"lambda > {LAMBDA_OVER_MU_MAX:g} mu is outside the locking-free regime")
        if not math.isfinite(self.e0):
            raise ValueError("e0 must be finite")
        return self

    def build(self):
        return LameMaterial(self.mu, self.lam)


class DtConfig(_Block):
    C_dt: float = Field(default=0.5, gt=0)
    fixed: Optional[float] = Field(default=None, gt=0)
    max_halvings: int = Field(default=6, ge=0)


class PicardConfig(_Block):
    enabled: bool = False
    tol: float = Field(default=1e-8, gt=0)
    max_iter: int = Field(default=50, ge=1)
    K: int = Field(default=1, ge=1)


class ForcingConfig(_Block):
    kind: Literal["none", "prescribed", "elastic"] = "none"
    constant: float = 0.0
    modes: List[Mode] = []


class FlowConfig(_Block):
    T: float = Field(default=1.0, gt=0)
    dt: DtConfig = DtConfig()
    forcing: ForcingConfig = ForcingConfig()
    picard: PicardConfig = PicardConfig()
    max_steps: Optional[int] = Field(default=None, ge=1)


_CUTOFF_FRACTION = re.compile(r"^\s*(\d+)\s*N\s*/\s*(\d+)\s*$")


class ElasticityConfig(_Block):
    nx: Optional[int] = Field(default=None, ge=1)
    ny: int = Field(default=32, ge=1)
    trace_cutoff: Union[int, str] = "2N/3"
    resolve_every: int = Field(default=1, ge=1)

    @field_validator("trace_cutoff")
    @classmethod
    def _cutoff(cls, v):
        if isinstance(v, int):
            if v < 0:
                raise ValueError("trace_cutoff must be non-negative")
            return v
        if not _CUTOFF_FRACTION.match(v):
            raise ValueError("trace_cutoff must be an integer or of the form 'pN/q'")
        return v.replace(" ", "")

    def cutoff_index(self, n):
        """Largest retained Fourier index: a band ``pN/q`` wide keeps ``|k| <= pN/(2q)``."""
        if isinstance(self.trace_cutoff, int):
            return self.trace_cutoff
        p, q = map(int, _CUTOFF_FRACTION.match(self.trace_cutoff).groups())
        return (p * n) // (2 * q)


class StabilityConfig(_Block):
    n_max: int = Field(default=8, ge=1)
    eps_rel: float = Field(default=1e-4, gt=0)
    a: Optional[float] = Field(default=None, gt=0)


class OutputConfig(_Block):
    dir: str = "out"
    csv_stride: int = Field(default=1, ge=1)
    snapshot_stride: Optional[int] = Field(default=None, ge=1)
    svg: bool = False


class SimConfig(_Block):
    geometry: GeometryConfig
    anisotropy: AnisotropyConfig = AnisotropyConfig()
    material: MaterialConfig = MaterialConfig()
    flow: FlowConfig = FlowConfig()
    elasticity: ElasticityConfig = ElasticityConfig()
    stability: StabilityConfig = StabilityConfig()
    output: OutputConfig = OutputConfig()
    seed: int = 0

    @model_validator(mode="after")
    def _cross(self):
        geo = self.geometry
        if self.flow.forcing.kind == "elastic" and geo.mode != "graph":
            raise ValueError("elastic forcing is only available in graph mode")
        if self.flow.picard.enabled and (geo.mode != "graph" or self.flow.forcing.kind != "elastic"):
            raise ValueError("Picard coupling needs graph mode with elastic forcing")
        nx = self.elasticity.nx
        if nx is not None and nx % geo.N:
            raise ValueError(f"elasticity.nx = {nx} must be a multiple of geometry.N = {geo.N}")
        if geo.mode == "graph" and geo.initial.a <= 0:
            raise ValueError("graph mode needs a positive mean thickness geometry.initial.a")
        return self

    # builders ----------------------------------------------------------------

    def reference(self, base_dir=None):
        geo = self.geometry
        if geo.mode == "graph":
            return ReferenceCurve.periodic_graph(geo.ell, geo.N)
        if geo.circle is not None:
            return ReferenceCurve.circle(geo.N, geo.circle.radius, tuple(geo.circle.center), geo.eta_bar)
        path = Path(geo.reference_file)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return ReferenceCurve.from_json(json.loads(path.read_text()))

    def initial_height(self, curve):
        ini = self.geometry.initial
        s, L = curve.s, curve.length[:, None]
        h = np.full(s.shape, ini.a, dtype=float)
        for m in ini.modes:
            h += m.amp * np.cos(2 * np.pi * m.n * s / L + m.phase)
        if ini.noise:
            h += ini.noise * np.random.default_rng(self.seed).standard_normal(s.shape)
        return HeightField(curve, h)

    def model(self):
        return self.anisotropy.build()

    def elastic_setup(self):
        el = self.elasticity
        return ElasticSetup(
            self.material.build(), self.material.e0, nx=el.nx, ny=el.ny,
            trace_cutoff=el.cutoff_index(self.geometry.N),
        )

    def hash(self):
        return config_hash(self)


def config_hash(cfg):
    """SHA-256 (first 16 hex digits) of the canonical JSON of the filled config."""
    doc = json.dumps(cfg.model_dump(mode="json", by_alias=True), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def _errors(exc):
    out = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"].removeprefix("Value error, ")
        out.append((path, msg))
    return out


def parse_config(text):
    """Validated :class:`SimConfig` from YAML or JSON text (JSON is valid YAML)."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([("<document>", f"not valid YAML/JSON: {exc}")]) from exc
    if not isinstance(doc, dict):
        raise ConfigError([("<document>", "top level must be a mapping")])
    try:
        return SimConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_errors(exc)) from None


def load_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"))
