"""Experiment configuration files (JSON) and their validation.

A configuration names one experiment, the mesh, the coefficients, and an
experiment-specific ``params`` block. Paths are resolved relative to the
configuration file. Validation errors are reported with the offending field
and, where it can be located, the line in the file.
"""
from __future__ import annotations

import json
import re
from enum import Enum
from pathlib import Path
from typing import Annotated, Literal

import numpy as np
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .coeffs import CoefficientA, CoefficientC, load_json
from .mesh import Region, TriangleMesh, generate


class ConfigError(ValueError):
    """Unreadable or invalid configuration; the message carries line/field diagnostics."""


class Experiment(str, Enum):
    SOLVE = "solve"
    DTN = "dtn"
    LINEARIZE = "linearize"
    PROBE_A0 = "probe-a0"
    PROBE_AU = "probe-au"
    CAP_CHECK = "cap-check"
    IDENTITY_CHECK = "identity-check"
    RECONSTRUCT = "reconstruct"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MeshSpec(_Strict):
    region: Literal["UnitSquare", "UnitDisk"] = "UnitSquare"
    resolution: int = Field(32, ge=2, le=512)
    file: Path | None = None

    def build(self, base: Path) -> TriangleMesh:
        if self.file is not None:
            return TriangleMesh.load(base / self.file)
        return generate(Region.parse(self.region), self.resolution)


class ASpec(_Strict):
    """``constant``, ``table`` (u_grid + a_values), ``clamped-linear`` or ``file``."""

    kind: Literal["constant", "table", "clamped-linear", "file"] = "constant"
    value: float = Field(1.0, gt=0)
    u_grid: list[float] | None = None
    a_values: list[float] | None = None
    base: float = Field(1.0, gt=0)
    rise: float = 0.5
    alpha: float = Field(0.5, gt=0, le=1)
    file: Path | None = None

    @model_validator(mode="after")
    def _complete(self):
        if self.kind == "table" and (self.u_grid is None or self.a_values is None):
            raise ValueError("kind 'table' needs u_grid and a_values")
        if self.kind == "file" and self.file is None:
            raise ValueError("kind 'file' needs file")
        return self

    def build(self, base: Path) -> CoefficientA:
        if self.kind == "constant":
            return CoefficientA.constant(self.value, alpha=self.alpha)
        if self.kind == "table":
            return CoefficientA(np.array(self.u_grid), np.array(self.a_values), self.alpha)
        if self.kind == "clamped-linear":
            grid = np.array(self.u_grid) if self.u_grid is not None else np.linspace(-2.0, 2.0, 17)
            return CoefficientA.from_function(lambda u: self.base + self.rise * np.clip(u, 0.0, 1.0),
                                              grid, self.alpha)
        coeff = load_json(base / self.file)
        if not isinstance(coeff, CoefficientA):
            raise ConfigError(f"{self.file}: not a coefficient-a document")
        return coeff


class CSpec(_Strict):
    """``zero``, ``constant``, ``bump`` (``amplitude * exp(-width |x - center|^2)``) or ``file``."""

    kind: Literal["zero", "constant", "bump", "file"] = "zero"
    value: float = Field(0.0, ge=0)
    amplitude: float = Field(0.5, ge=0)
    center: tuple[float, float] = (0.5, 0.5)
    width: float = Field(8.0, gt=0)
    alpha: float = Field(0.5, gt=0, le=1)
    file: Path | None = None

    def function(self):
        if self.kind == "zero":
            return lambda x, y: np.zeros_like(x)
        if self.kind == "constant":
            return lambda x, y: np.full_like(x, self.value)
        if self.kind == "bump":
            cx, cy = self.center
            return lambda x, y: self.amplitude * np.exp(-self.width * ((x - cx) ** 2 + (y - cy) ** 2))
        raise ConfigError("a c file has nodal values only; use it with the matching mesh")

    def build(self, mesh: TriangleMesh, base: Path) -> CoefficientC:
        if self.kind == "file":
            coeff = load_json(base / self.file)
            if not isinstance(coeff, CoefficientC) or coeff.values.shape != (mesh.n_vertices,):
                raise ConfigError(f"{self.file}: not a c document for this mesh")
            return coeff
        return CoefficientC.from_function(mesh, self.function(), self.alpha)


class DatumSpec(_Strict):
    """Boundary datum: ``offset + amplitude * shape`` with a Fourier, harmonic or random shape."""

    kind: Literal["constant", "fourier", "harmonic", "random"] = "fourier"
    amplitude: float = 1.0
    offset: float = 0.0
    mode: int = Field(1, ge=0)
    part: Literal["cos", "sin", "re", "im"] = "cos"
    degree: int = Field(1, ge=0)

    def build(self, mesh: TriangleMesh, rng: np.random.Generator) -> np.ndarray:
        nb = len(mesh.boundary_nodes)
        if self.kind == "constant":
            shape = np.ones(nb)
        elif self.kind == "fourier":
            s = mesh.boundary_arclength / (mesh.boundary_arclength[-1] + mesh.boundary_edge_lengths[-1])
            shape = (np.sin if self.part == "sin" else np.cos)(2 * np.pi * self.mode * s)
        elif self.kind == "harmonic":
            p = mesh.boundary_points - mesh.centroid
            z = (p[:, 0] + 1j * p[:, 1]) ** self.degree
            shape = z.imag if self.part == "im" else z.real
        else:
            from .verify import random_boundary_data
            shape = random_boundary_data(mesh, rng, n_modes=max(self.mode, 1))
        return self.offset + self.amplitude * shape


class LambdaSpec(_Strict):
    kind: Literal["harmonic", "probe"] = "harmonic"
    degree: int = Field(0, ge=0)
    part: Literal["re", "im"] = "re"
    anchor: tuple[float, float] = (0.5, 0.0)
    normal: tuple[float, float] = (0.0, -1.0)
    eps: float = Field(0.1, gt=0)

    def build(self):
        from .probes import HarmonicPolynomial, SingularProbe
        if self.kind == "harmonic":
            return HarmonicPolynomial(self.degree, self.part)
        return SingularProbe.normal_derivative(self.anchor, self.normal, self.eps)

    def label(self) -> str:
        if self.kind == "harmonic":
            return f"{self.part}(z^{self.degree})"
        return f"probe({self.anchor[0]:g},{self.anchor[1]:g};eps={self.eps:g})"


def _positive_list(v):
    if not v or any(x <= 0 for x in v):
        raise ValueError("must be a non-empty list of positive numbers")
    return v


PositiveList = Annotated[list[float], AfterValidator(_positive_list)]


class SolveParams(_Strict):
    g: DatumSpec = DatumSpec()
    path: Literal["picard", "kirchhoff", "both"] = "both"
    tol: float = Field(1e-10, gt=0)
    max_iter: int = Field(200, ge=1)
    damping: float = Field(1.0, gt=0, le=1)


class DtnParams(_Strict):
    g: DatumSpec = DatumSpec()
    h: DatumSpec = DatumSpec(part="sin", mode=2)


class LinearizeParams(_Strict):
    g: DatumSpec = DatumSpec()
    taus: PositiveList = [2.0 ** -k for k in range(9)]


class PairSpec(_Strict):
    a0: float = Field(gt=0)
    c: CSpec = CSpec()


class ProbeA0Params(_Strict):
    pair1: PairSpec = PairSpec(a0=1.3, c=CSpec(kind="constant", value=0.5))
    pair2: PairSpec = PairSpec(a0=0.9)
    distances: PositiveList = [0.5 * 2.0 ** -k for k in range(6)]


class ProbeAuParams(_Strict):
    a1: ASpec = ASpec(kind="clamped-linear")
    a2: ASpec = ASpec(kind="constant", value=1.0)
    g_high: float = 1.0
    g_low: float = 0.2
    eps: PositiveList = [0.2 * 2.0 ** -k for k in range(5)]


class CapParams(_Strict):
    r: PositiveList = [0.5, 1.0, 2.0]
    eps: PositiveList = [0.5, 1.0, 2.0]


class IdentityParams(_Strict):
    a1: ASpec = ASpec(kind="table", u_grid=[-1.0, 0.0, 1.0], a_values=[0.8, 1.0, 1.5])
    a2: ASpec = ASpec(kind="table", u_grid=[-1.0, 1.0], a_values=[1.2, 0.9])
    g: DatumSpec = DatumSpec(kind="fourier", part="sin", amplitude=0.8, offset=0.2)
    lambdas: list[LambdaSpec] = [LambdaSpec(degree=0), LambdaSpec(degree=1), LambdaSpec(kind="probe")]


class ReconstructParams(_Strict):
    u_grid: list[float] = list(np.linspace(-1.0, 1.5, 11))
    alpha: float = Field(0.5, gt=0, le=1)
    beta_c: float = Field(1e-8, gt=0)
    beta_a: float = Field(1e-8, gt=0)
    small_amplitude: float = Field(0.002, gt=0, le=0.05)
    small_degree: int = Field(4, ge=1)
    large_amplitudes: list[float] = [0.25, 0.5, 1.0]
    large_degree: int = Field(2, ge=1)
    guard: bool = True
    noise: float = Field(0.0, ge=0)

    @field_validator("u_grid")
    @classmethod
    def _grid(cls, v):
        if 0.0 not in v or any(b <= a for a, b in zip(v[:-1], v[1:])):
            raise ValueError("u_grid must be increasing and contain 0")
        return v


PARAMS = {
    Experiment.SOLVE: SolveParams,
    Experiment.DTN: DtnParams,
    Experiment.LINEARIZE: LinearizeParams,
    Experiment.PROBE_A0: ProbeA0Params,
    Experiment.PROBE_AU: ProbeAuParams,
    Experiment.CAP_CHECK: CapParams,
    Experiment.IDENTITY_CHECK: IdentityParams,
    Experiment.RECONSTRUCT: ReconstructParams,
}


class ExperimentConfig(_Strict):
    experiment: Experiment
    seed: int = Field(0, ge=0)
    output_dir: Path = Path("out")
    mesh: MeshSpec = MeshSpec()
    a: ASpec = ASpec()
    c: CSpec = CSpec()
    params: dict = Field(default_factory=dict)
    tolerances: dict[str, float] = Field(default_factory=dict)

    @field_validator("tolerances")
    @classmethod
    def _known(cls, v):
        from .verify import DEFAULT_TOLERANCES
        unknown = sorted(set(v) - set(DEFAULT_TOLERANCES))
        if unknown:
            raise ValueError(f"unknown tolerance names {unknown}")
        return v

    @property
    def typed_params(self):
        return PARAMS[self.experiment].model_validate(self.params)


class SuiteConfig(_Strict):
    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    checks: list[str] | None = None
    tolerances: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _names(self):
        from .verify import CHECKS, DEFAULT_TOLERANCES
        bad = sorted(set(self.checks or []) - set(CHECKS)) + sorted(set(self.tolerances) - set(DEFAULT_TOLERANCES))
        if bad:
            raise ValueError(f"unknown check or tolerance names {bad}")
        return self


# -- loading with diagnostics ------------------------------------------------------------

def _line_of(text: str, loc) -> int | None:
    """Best-effort line number of the innermost string key of ``loc``."""
    keys = [k for k in loc if isinstance(k, str)]
    for key in reversed(keys):
        m = re.search(r'"%s"\s*:' % re.escape(key), text)
        if m:
            return text.count("\n", 0, m.start()) + 1
    return None


def _format(err: ValidationError, text: str, source: str) -> str:
    lines = []
    for e in err.errors():
        loc = tuple(e["loc"])
        field_path = ".".join(str(p) for p in loc) or "<root>"
        line = _line_of(text, loc)
        where = f"{source}:{line}" if line else source
        lines.append(f"{where}: field '{field_path}': {e['msg']}")
    return "\n".join(lines)


def _check_files(cfg: BaseModel, base: Path, path=()):
    for name, value in cfg:
        if isinstance(value, BaseModel):
            _check_files(value, base, path + (name,))
        elif isinstance(value, list):
            for i, v in enumerate(value):
                if isinstance(v, BaseModel):
                    _check_files(v, base, path + (name, i))
        elif name == "file" and value is not None and not (base / value).exists():
            raise ConfigError(f"field '{'.'.join(map(str, path + (name,)))}': file {value} does not exist")


def parse_config(text: str, model=ExperimentConfig, source: str = "<config>", base: Path = Path(".")):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    try:
        cfg = model.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format(exc, text, source)) from None
    if isinstance(cfg, ExperimentConfig):
        try:
            params = cfg.typed_params
        except ValidationError as exc:
            msgs = []
            for e in exc.errors():
                loc = ("params",) + tuple(e["loc"])
                line = _line_of(text, loc)
                msgs.append(f"{source}:{line or '?'}: field '{'.'.join(map(str, loc))}': {e['msg']}")
            raise ConfigError("\n".join(msgs)) from None
        _check_files(cfg, base)
        _check_files(params, base, ("params",))
    return cfg


def load_config(path, model=ExperimentConfig):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration ({exc.strerror})") from None
    return parse_config(text, model, str(path), path.parent)
