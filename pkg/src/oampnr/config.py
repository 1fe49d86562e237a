"""Run profiles: strict JSON schema, defaults and content digest.

All physical quantities are dimensionless or in radians. A profile looks like::

    {
      "name": "paper_fit",
      "geometry": {"kind": "double", "width_w": 0.2618, "separation_phi0": 0.5236},
      "source": {"mu0": 1.02, "eta0": 0.07, "lambda_bw": 40, "zeta": 0.5, "theta": 0.7854},
      "caps": {"nmax": 20, "mmax": 20, "n_grid": 8, "l_min": -15, "l_max": 15},
      "modes": {"l1": 0, "l2": 0},
      "interference": {"l2": 3, "projections": [[4, 4], [1, 4]]},
      "mc": {"sample_count": 1000000, "seed": 1, "batch": 65536},
      "synthesis": {"n_pixels": 256, "extent": 8.0, "r0": 0.25, "frames": 500}
    }

Every section is optional and falls back to the defaults below; unknown keys
anywhere are rejected.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError, InvalidParameter
from .montecarlo import McConfig
from .source import SlitGeometry, SlitKind, SourceParams
from .synthesis import GridSpec


@dataclass(frozen=True)
class Caps:
    nmax: int = 20
    mmax: int = 20
    n_grid: int = 8
    l_min: int = -15
    l_max: int = 15
    photon_cap: int | None = None  # marginal-sum cap for g2~; None picks it from the arm tails

    def __post_init__(self):
        if min(self.nmax, self.mmax, self.n_grid) < 0:
            raise InvalidParameter("photon caps must be nonnegative")
        if self.l_min > self.l_max:
            raise InvalidParameter("l_min exceeds l_max")

    @property
    def l_range(self) -> list[int]:
        return list(range(self.l_min, self.l_max + 1))


@dataclass(frozen=True)
class Modes:
    l1: int = 0
    l2: int = 0


@dataclass(frozen=True)
class Interference:
    l2: int = 3
    projections: tuple = ((4, 4), (7, 7), (1, 4), (1, 7))
    first_order: tuple = (0, 4, 7)

    def __post_init__(self):
        object.__setattr__(self, "projections", tuple(tuple(int(v) for v in p) for p in self.projections))
        object.__setattr__(self, "first_order", tuple(int(v) for v in self.first_order))
        if any(len(p) != 2 for p in self.projections):
            raise InvalidParameter("projections must be [n1, n2] pairs")


@dataclass(frozen=True)
class G2Tilde:
    n1: int = 4
    n2: int = 4


@dataclass(frozen=True)
class Synthesis:
    n_pixels: int = 256
    extent: float = 8.0
    w0: float = 1.0
    r0: float = 0.25
    frames: int = 500
    bias: float = 0.0
    seed: int = 0
    p_max: int = 10
    l_max: int = 10
    basis: str = "angular"
    subharmonics: int = 0  # extra low-frequency screen levels; 0 is the plain FFT screen

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.n_pixels, self.extent)


@dataclass(frozen=True)
class FitGrid:
    scale: tuple = (0.25, 0.5, 0.7)
    lambda_bw: tuple = (20.0, 40.0, 100.0, 300.0, 1000.0)
    zeta: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    target_g2: float = 1.74
    target_peak: int = 3
    target_hole_peak: int = -3
    hole_pairs: int = 8

    def __post_init__(self):
        for k in ("scale", "lambda_bw", "zeta"):
            object.__setattr__(self, k, tuple(float(v) for v in getattr(self, k)))


@dataclass(frozen=True)
class RunProfile:
    name: str = "default"
    geometry: SlitGeometry = field(default_factory=SlitGeometry.paper_double)
    source: SourceParams = field(default_factory=SourceParams)
    caps: Caps = field(default_factory=Caps)
    modes: Modes = field(default_factory=Modes)
    interference: Interference = field(default_factory=Interference)
    g2tilde: G2Tilde = field(default_factory=G2Tilde)
    mc: McConfig = field(default_factory=McConfig)
    synthesis: Synthesis = field(default_factory=Synthesis)
    fit: FitGrid = field(default_factory=FitGrid)

    def to_dict(self) -> dict:
        return _plain(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "RunProfile":
        return dataclasses.replace(self, **changes)


SECTIONS = {
    "geometry": SlitGeometry,
    "source": SourceParams,
    "caps": Caps,
    "modes": Modes,
    "interference": Interference,
    "g2tilde": G2Tilde,
    "mc": McConfig,
    "synthesis": Synthesis,
    "fit": FitGrid,
}


def _plain(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, SlitKind):
        return obj.value
    if isinstance(obj, complex):
        return obj.real if obj.imag == 0 else [obj.real, obj.imag]
    if isinstance(obj, (tuple, list)):
        return [_plain(v) for v in obj]
    return obj


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(text: str, path: str, key: str) -> str:
    line = _line_of(text, key) if text else None
    return f"{path} (line {line})" if line else path


def _coerce(section: str, cls, raw: dict, text: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{section}' must be an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in names:
            raise ConfigError(f"unknown key {_where(text, f'{section}.{key}', key)}")
    kw = {}
    for key, val in raw.items():
        if key == "mu0" and isinstance(val, list):
            if len(val) != 2:
                raise ConfigError(f"{_where(text, 'source.mu0', key)}: expected [re, im]")
            val = complex(val[0], val[1])
        kw[key] = val
    try:
        return cls(**kw)
    except (InvalidParameter, TypeError, ValueError) as exc:
        raise ConfigError(f"section '{section}' ({_where(text, section, section)}): {exc}") from exc


def profile_from_dict(data: dict, text: str = "") -> RunProfile:
    if not isinstance(data, dict):
        raise ConfigError("profile must be a JSON object")
    allowed = {"name", *SECTIONS}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key {_where(text, key, key)}")
    kw = {}
    if "name" in data:
        if not isinstance(data["name"], str):
            raise ConfigError("name must be a string")
        kw["name"] = data["name"]
    for sec, cls in SECTIONS.items():
        if sec in data:
            kw[sec] = _coerce(sec, cls, data[sec], text)
    return RunProfile(**kw)


def load_profile(path: str | Path | None) -> RunProfile:
    if path is None:
        return RunProfile()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read profile: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return profile_from_dict(data, text)


def dump_profile(profile: RunProfile, path: str | Path) -> None:
    Path(path).write_text(json.dumps(profile.to_dict(), indent=2, sort_keys=True) + "\n")


def brightness_profile(geom: SlitGeometry, scale: float, lambda_bw: float, zeta: float, target_g2: float = 1.74,
                       theta: float = math.pi / 4) -> SourceParams:
    """Source whose (0, 0) mode has per-quadrature variance ``scale`` and single-mode g2 ``target_g2``.

    For a single displaced thermal mode g2 = 1 + (1 + 2x)/(1 + x)^2 with
    x = |mu|^2/(2 sigma); solve for x and set mu0 accordingly.
    """
    from .source import covariance

    c = target_g2 - 1.0
    if not 0.0 < c <= 1.0:
        raise InvalidParameter("single-mode g2 must lie in (1, 2]")
    # c x^2 + (2c - 2) x + (c - 1) = 0, positive root
    x = ((2 - 2 * c) + math.sqrt((2 * c - 2) ** 2 - 4 * c * (c - 1))) / (2 * c)
    unit = SourceParams(mu0=1.0, eta0=1.0, lambda_bw=lambda_bw, zeta=zeta, theta=theta)
    s0 = covariance(0, 0, geom, unit).real
    return SourceParams(mu0=math.sqrt(2 * x * scale), eta0=scale / s0, lambda_bw=lambda_bw, zeta=zeta, theta=theta)
