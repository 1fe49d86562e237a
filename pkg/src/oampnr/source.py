"""Two-mode complex-Gaussian source projected onto OAM modes behind angular slits.

Absolute field scales are folded into ``mu0`` (which absorbs the ``2w``
prefactor of the slit Fourier transform) and ``eta0``; only ratios enter the
correlation functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import DegenerateCovariance, InvalidParameter

TWO_PI = 2.0 * math.pi


class SlitKind(str, Enum):
    SINGLE = "single"
    DOUBLE = "double"


@dataclass(frozen=True)
class SlitGeometry:
    """Angular aperture: one slit of width ``width_w`` centred at 0, plus a
    second one centred at ``separation_phi0`` when ``kind`` is double."""

    width_w: float
    separation_phi0: float = 0.0
    kind: SlitKind = SlitKind.DOUBLE

    def __post_init__(self):
        object.__setattr__(self, "kind", SlitKind(self.kind))
        if not 0.0 < self.width_w < TWO_PI:
            raise InvalidParameter(f"slit width must lie in (0, 2pi), got {self.width_w}")
        if not 0.0 <= self.separation_phi0 < TWO_PI:
            raise InvalidParameter(f"slit separation must lie in [0, 2pi), got {self.separation_phi0}")
        if self.kind is SlitKind.DOUBLE and self.separation_phi0 < self.width_w:
            raise InvalidParameter("double slits overlap: separation_phi0 < width_w")

    @classmethod
    def paper_double(cls) -> "SlitGeometry":
        """Double slit with separation pi/6 and widths pi/12."""
        return cls(width_w=math.pi / 12, separation_phi0=math.pi / 6, kind=SlitKind.DOUBLE)


@dataclass(frozen=True)
class SourceParams:
    mu0: complex = 1.0
    eta0: float = 1.0
    lambda_bw: float = 50.0
    zeta: float = 0.0
    theta: float = math.pi / 4
    tail_eps: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "mu0", complex(self.mu0))
        if not self.eta0 > 0:
            raise InvalidParameter(f"eta0 must be positive, got {self.eta0}")
        if not self.lambda_bw > 0:
            raise InvalidParameter(f"lambda_bw must be positive, got {self.lambda_bw}")
        if not 0.0 <= self.zeta <= 1.0:
            raise InvalidParameter(f"zeta must lie in [0, 1], got {self.zeta}")
        if not 0.0 < self.tail_eps < 1.0:
            raise InvalidParameter(f"tail_eps must lie in (0, 1), got {self.tail_eps}")

    @property
    def l_cut(self) -> int:
        return math.ceil(math.sqrt(self.lambda_bw * math.log(1.0 / self.tail_eps)))


@dataclass(frozen=True)
class ModePairGaussian:
    """Complex-Gaussian statistics of the OAM amplitudes (alpha, beta).

    ``sigma`` is the per-quadrature variance, so ``<|alpha - mu1|^2> = 2 sigma1``.
    ``eta`` follows the P-function convention ``<(alpha - mu1)(beta - mu2)^*> = 2 eta``.
    """

    l1: int
    l2: int
    mu1: complex
    mu2: complex
    sigma1: float
    sigma2: float
    eta: complex
    gamma: np.ndarray = field(repr=False, compare=False)

    @property
    def single_mode(self) -> bool:
        """Both arms see the same OAM amplitude (l1 == l2)."""
        return self.l1 == self.l2

    @property
    def det(self) -> float:
        return self.sigma1 * self.sigma2 - abs(self.eta) ** 2

    @property
    def mean_vector(self) -> np.ndarray:
        return np.array([self.mu1.real, self.mu1.imag, self.mu2.real, self.mu2.imag])

    @property
    def mean_photons(self) -> tuple[float, float]:
        return (2 * self.sigma1 + abs(self.mu1) ** 2, 2 * self.sigma2 + abs(self.mu2) ** 2)

    def digest(self) -> str:
        vals = (self.l1, self.l2, self.mu1, self.mu2, self.sigma1, self.sigma2, self.eta)
        return "|".join(repr(v) for v in vals)

    @classmethod
    def from_moments(cls, mu1, mu2, sigma1, sigma2, eta, l1=0, l2=1, deg_eps=1e-14):
        """Build a state directly from its moments (l1 != l2 unless single mode)."""
        mu1, mu2, eta = complex(mu1), complex(mu2), complex(eta)
        sigma1, sigma2 = float(sigma1), float(sigma2)
        if sigma1 <= 0 or sigma2 <= 0:
            raise InvalidParameter("variances must be positive")
        if l1 == l2:
            if not (math.isclose(sigma1, sigma2) and math.isclose(eta.real, sigma1) and abs(eta.imag) < 1e-15 * sigma1
                    and mu1 == mu2):
                raise InvalidParameter("a single-mode state needs mu1 == mu2 and eta == sigma1 == sigma2")
        elif sigma1 * sigma2 - abs(eta) ** 2 <= deg_eps * sigma1 * sigma2:
            raise DegenerateCovariance(
                f"sigma1*sigma2 - |eta|^2 = {sigma1 * sigma2 - abs(eta) ** 2:.3e} for modes ({l1}, {l2})"
            )
        return cls(l1, l2, mu1, mu2, sigma1, sigma2, eta, covariance_matrix(sigma1, sigma2, eta))


def covariance_matrix(sigma1: float, sigma2: float, eta: complex) -> np.ndarray:
    """Real 4x4 covariance of (Re a, Im a, Re b, Im b)."""
    er, ei = eta.real, eta.imag
    return np.array(
        [
            [sigma1, 0.0, er, -ei],
            [0.0, sigma1, ei, er],
            [er, ei, sigma2, 0.0],
            [-ei, er, 0.0, sigma2],
        ]
    )


def sinc(x):
    """Unnormalised sinc, sin(x)/x."""
    return np.sinc(np.asarray(x, dtype=float) / math.pi)


def slit_transmission(phi: float, geom: SlitGeometry) -> int:
    half = geom.width_w / 2
    # wrap the angular distance onto [-pi, pi]
    d0 = math.remainder(phi, TWO_PI)
    if abs(d0) <= half:
        return 1
    if geom.kind is SlitKind.DOUBLE and abs(math.remainder(phi - geom.separation_phi0, TWO_PI)) <= half:
        return 1
    return 0


def _slit_profile(dl, geom: SlitGeometry):
    """Normalised Fourier profile of the aperture at OAM offset ``dl`` (1 at dl = 0)."""
    dl = np.asarray(dl, dtype=float)
    env = sinc(geom.width_w * dl / 2)
    if geom.kind is SlitKind.DOUBLE:
        env = env * np.cos(geom.separation_phi0 * dl / 2)
    return env


def _slit_phase(dl, geom: SlitGeometry):
    if geom.kind is SlitKind.SINGLE:
        return np.ones_like(np.asarray(dl, dtype=float), dtype=complex)
    return np.exp(-0.5j * geom.separation_phi0 * np.asarray(dl, dtype=float))


def mean_amplitude(l: int, geom: SlitGeometry, params: SourceParams) -> complex:
    shaped = complex(_slit_phase(l, geom) * _slit_profile(l, geom))
    return params.mu0 * ((1.0 - params.zeta) * shaped + params.zeta)


@lru_cache(maxsize=64)
def _bandwidth_weights(lambda_bw: float, l_cut: int):
    ells = np.arange(-l_cut, l_cut + 1)
    return ells, np.exp(-(ells.astype(float) ** 2) / lambda_bw)


def covariance(l1: int, l2: int, geom: SlitGeometry, params: SourceParams) -> complex:
    """Cross-covariance eta(l1, l2) as the truncated sum over the spiral spectrum.

    Normalised so that for large ``lambda_bw`` it tends to
    ``eta0 * phase * profile(l1 - l2) * exp(-(l1 + l2)^2 / (4 lambda))``.
    """
    ells, weights = _bandwidth_weights(float(params.lambda_bw), params.l_cut)
    terms = weights * _slit_profile(l1 - ells, geom) * _slit_profile(ells - l2, geom)
    # Fourier coefficients of S(phi)^2 = S(phi) fix the normalisation
    norm = geom.width_w / (math.pi if geom.kind is SlitKind.DOUBLE else TWO_PI)
    total = math.fsum(terms.tolist()) * norm * params.eta0
    if l1 == l2:
        return complex(total)
    return complex(_slit_phase(l1 - l2, geom) * total)


def covariance_large_lambda(l1: int, l2: int, geom: SlitGeometry, params: SourceParams) -> complex:
    """Closed-form large-bandwidth approximation of :func:`covariance`."""
    d = l1 - l2
    env = math.exp(-((l1 + l2) ** 2) / (4 * params.lambda_bw))
    return complex(params.eta0 * _slit_phase(d, geom) * _slit_profile(d, geom) * env)


def mode_pair_state(l1: int, l2: int, geom: SlitGeometry, params: SourceParams, deg_eps: float = 1e-14) -> ModePairGaussian:
    mu1 = mean_amplitude(l1, geom, params)
    sigma1 = covariance(l1, l1, geom, params).real
    if l1 == l2:
        return ModePairGaussian(l1, l2, mu1, mu1, sigma1, sigma1, complex(sigma1),
                                covariance_matrix(sigma1, sigma1, complex(sigma1)))
    mu2 = mean_amplitude(l2, geom, params)
    sigma2 = covariance(l2, l2, geom, params).real
    eta = covariance(l1, l2, geom, params)
    return ModePairGaussian.from_moments(mu1, mu2, sigma1, sigma2, eta, l1=l1, l2=l2, deg_eps=deg_eps)


def p_function_density(state: ModePairGaussian, alpha, beta):
    """Complex-Gaussian P-function of the mode pair at (alpha, beta); broadcasts over arrays."""
    if state.single_mode:
        raise DegenerateCovariance("single-mode pair has no two-mode density")
    d = state.det
    if d <= 0:
        raise DegenerateCovariance("non-positive covariance determinant")
    da = np.asarray(alpha) - state.mu1
    db = np.asarray(beta) - state.mu2
    quad = state.sigma2 * np.abs(da) ** 2 + state.sigma1 * np.abs(db) ** 2 - 2 * np.real(np.conj(da) * db * state.eta)
    out = np.exp(-quad / (2 * d)) / (4 * math.pi**2 * abs(d))
    return float(out) if out.ndim == 0 else out
