"""Second-order coherence observables: classical g2 and photon-number-resolved g2."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidParameter, TailToleranceExceeded
from .fock import PHOTON_CAP_DOUBLE, FockEvaluator, arm_scaled, evaluator, single_mode_moment
from .source import ModePairGaussian, SlitGeometry, SourceParams, mode_pair_state

TAIL_TOL = 1e-6
MARGINAL_TAIL = 1e-9
MARGINAL_RTOL = 1e-8


class MapKind(str, Enum):
    CLASSICAL_G2 = "classical_g2"
    MULTIPHOTON_G2 = "multiphoton_g2"
    FIRST_ORDER = "first_order"
    JOINT = "joint"


@dataclass
class JointPnrDistribution:
    probs: np.ndarray
    nmax: int
    mmax: int
    tail_mass: float
    params_digest: str
    clamped: int = 0

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        return self.probs.sum(axis=1), self.probs.sum(axis=0)

    def mean_counts(self) -> tuple[float, float]:
        p1, p2 = self.marginals()
        return float(np.arange(self.nmax + 1) @ p1), float(np.arange(self.mmax + 1) @ p2)

    def moment_g2(self) -> float:
        """<n1 n2> / (<n1><n2>) from the truncated distribution."""
        n = np.arange(self.nmax + 1)
        m = np.arange(self.mmax + 1)
        m1, m2 = self.mean_counts()
        return float(n @ self.probs @ m) / (m1 * m2)


@dataclass
class CorrelationMap:
    axis1: list[int]
    axis2: list[int]
    values: np.ndarray
    kind: MapKind
    meta: dict = field(default_factory=dict)
    labels: tuple[str, str] = ("l1", "l2")

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise InvalidParameter("correlation map contains non-finite values")

    def argmax1(self) -> int:
        """Axis-1 label of the largest value (1D maps)."""
        flat = self.values.reshape(len(self.axis1), -1)[:, 0]
        return self.axis1[int(np.argmax(flat))]

    def trace(self) -> list[tuple[int, int, float]]:
        """Entries ordered by axis1 + axis2, then axis1."""
        rows = [(a, b, float(self.values[i, j])) for i, a in enumerate(self.axis1) for j, b in enumerate(self.axis2)]
        return sorted(rows, key=lambda r: (r[0] + r[1], r[0]))


def g2_classical(state: ModePairGaussian) -> float:
    num = 4 * abs(state.eta) ** 2 + 4 * (state.mu1.conjugate() * state.mu2 * state.eta).real
    den = (2 * state.sigma1 + abs(state.mu1) ** 2) * (2 * state.sigma2 + abs(state.mu2) ** 2)
    return 1.0 + num / den


def arm_marginal(state: ModePairGaussian, theta: float, arm: int, nmax: int) -> np.ndarray:
    """Exact single-arm photon-number law (a displaced thermal distribution)."""
    ma, mb, s1, s2, _ = arm_scaled(state, theta)
    mu, sig = (ma, s1) if arm == 1 else (mb, s2)
    if sig <= 0:
        out = np.zeros(nmax + 1)
        out[0] = 1.0
        return out
    return np.array([single_mode_moment(n, n, mu, sig).real / math.factorial(n) for n in range(nmax + 1)])


def joint_pnr_distribution(state: ModePairGaussian, theta: float, nmax: int, mmax: int,
                           tail_tol: float | None = TAIL_TOL, **kw) -> JointPnrDistribution:
    ev = evaluator(state, theta, max(nmax, mmax), **kw)
    probs = ev.joint_probabilities(nmax, mmax)
    neg = probs < 0
    if np.any(probs < -1e-12):
        raise ArithmeticError(f"probability {probs.min():.3e} below round-off floor")
    clamped = int(neg.sum())
    if clamped:
        warnings.warn(f"clamped {clamped} round-off negative probabilities", RuntimeWarning, stacklevel=2)
        probs = np.where(neg, 0.0, probs)
    tail = max(0.0, 1.0 - math.fsum(probs.ravel().tolist()))
    if tail_tol is not None and tail > tail_tol:
        raise TailToleranceExceeded(f"tail mass {tail:.3e} exceeds {tail_tol:.1e} at caps ({nmax},{mmax})")
    return JointPnrDistribution(probs, nmax, mmax, tail, state.digest(), clamped)


def _marginal_cap(state: ModePairGaussian, theta: float, floor: int) -> int:
    """Smallest cap >= floor at which both exact arm tails drop below MARGINAL_TAIL."""
    cap = max(floor, 4)
    while True:
        t1 = 1.0 - arm_marginal(state, theta, 1, cap).sum()
        t2 = 1.0 - arm_marginal(state, theta, 2, cap).sum()
        if max(t1, t2) < MARGINAL_TAIL:
            return cap
        if cap >= PHOTON_CAP_DOUBLE:
            raise TailToleranceExceeded(
                f"arm tails ({t1:.2e}, {t2:.2e}) above {MARGINAL_TAIL:.0e} at the double-precision cap {cap}"
            )
        cap = min(2 * cap, PHOTON_CAP_DOUBLE)


def _truncated_marginals(ev: FockEvaluator, n1: int, n2: int, cap: int) -> tuple[float, float]:
    row = math.fsum(ev.element(n1, m, n1, m).real for m in range(cap + 1))
    col = math.fsum(ev.element(n, n2, n, n2).real for n in range(cap + 1))
    return row, col


def g2_multiphoton(state: ModePairGaussian, theta: float, n1: int, n2: int, cap: int | None = None,
                   marginals: str = "exact", **kw) -> float:
    """P(n1, n2) over the product of the arm marginals P1(n1) P2(n2).

    ``marginals="truncated"`` sums the joint law up to ``cap`` (chosen so both
    exact arm tails are below MARGINAL_TAIL) and checks the sums against the
    closed-form arm laws; ``"exact"`` uses those closed forms directly, which
    is the cap -> infinity limit and far cheaper.
    """
    if marginals not in ("exact", "truncated"):
        raise InvalidParameter(f"unknown marginal mode {marginals!r}")
    exact_row = arm_marginal(state, theta, 1, n1)[n1]
    exact_col = arm_marginal(state, theta, 2, n2)[n2]
    if marginals == "exact":
        if cap is not None and max(n1, n2) > cap:
            raise InvalidParameter(f"photon numbers ({n1},{n2}) exceed cap {cap}")
        joint = evaluator(state, theta, max(n1, n2, 1), **kw).element(n1, n2, n1, n2).real
        return joint / (exact_row * exact_col)
    if cap is None:
        cap = _marginal_cap(state, theta, max(n1, n2))
    if max(n1, n2) > cap:
        raise InvalidParameter(f"photon numbers ({n1},{n2}) exceed cap {cap}")
    ev = evaluator(state, theta, cap, **kw)
    joint = ev.element(n1, n2, n1, n2).real
    row, col = _truncated_marginals(ev, n1, n2, cap)
    for got, want, what in ((row, exact_row, "arm-1"), (col, exact_col, "arm-2")):
        if abs(got - want) > max(MARGINAL_RTOL * want, MARGINAL_TAIL):
            raise TailToleranceExceeded(f"{what} marginal truncated at {cap} misses {want - got:.2e}")
    return joint / (row * col)


def g2_multiphoton_grid(state: ModePairGaussian, theta: float, nmax: int, cap: int | None = None,
                        marginals: str = "exact", **kw) -> np.ndarray:
    """Matrix of g2~(n1, n2) for n1, n2 <= nmax."""
    if marginals == "exact":
        ev = evaluator(state, theta, max(nmax, 1), **kw)
        joint = ev.joint_probabilities(nmax, nmax)
        p1 = arm_marginal(state, theta, 1, nmax)
        p2 = arm_marginal(state, theta, 2, nmax)
        return joint / np.outer(p1, p2)
    if marginals != "truncated":
        raise InvalidParameter(f"unknown marginal mode {marginals!r}")
    if cap is None:
        cap = _marginal_cap(state, theta, nmax)
    dist = joint_pnr_distribution(state, theta, cap, cap, tail_tol=None, **kw)
    p1, p2 = dist.marginals()
    for got, want in ((p1[: nmax + 1], arm_marginal(state, theta, 1, nmax)),
                      (p2[: nmax + 1], arm_marginal(state, theta, 2, nmax))):
        if np.any(np.abs(got - want) > np.maximum(MARGINAL_RTOL * want, MARGINAL_TAIL)):
            raise TailToleranceExceeded(f"truncated marginals at cap {cap} miss the exact arm law")
    return dist.probs[: nmax + 1, : nmax + 1] / np.outer(p1[: nmax + 1], p2[: nmax + 1])


def visibility(values: Sequence[float], baseline: float = 0.0) -> float:
    """(max - min)/(max + min) of ``values - baseline``."""
    v = np.asarray(values, dtype=float) - baseline
    return float((v.max() - v.min()) / (v.max() + v.min()))


def g2_visibility(values: Sequence[float]) -> float:
    """Visibility of a g2 curve, taken on g2 - 1."""
    return visibility(values, baseline=1.0)


def scan_interference(geom: SlitGeometry, params: SourceParams, l2_fixed: int, l1_range: Iterable[int],
                      projection: tuple[int, int] | None = None, cap: int | None = None, **kw) -> CorrelationMap:
    l1s = list(l1_range)
    if not l1s:
        raise InvalidParameter("empty OAM range")
    vals = []
    for l1 in l1s:
        st = mode_pair_state(l1, l2_fixed, geom, params)
        if projection is None:
            vals.append(g2_classical(st))
        else:
            vals.append(g2_multiphoton(st, params.theta, projection[0], projection[1], cap, **kw))
    kind = MapKind.CLASSICAL_G2 if projection is None else MapKind.MULTIPHOTON_G2
    meta = {"l2": l2_fixed, "projection": projection}
    return CorrelationMap(l1s, [l2_fixed], np.array(vals)[:, None], kind, meta)


def scan_oam_map(geom: SlitGeometry, params: SourceParams, l_range: Iterable[int],
                 projection: tuple[int, int] | None = None, cap: int | None = None, **kw) -> CorrelationMap:
    """2D map over (l1, l2) of g2 (projection None) or g2~ at fixed (n1, n2)."""
    ls = list(l_range)
    vals = np.empty((len(ls), len(ls)))
    for i, l1 in enumerate(ls):
        for j, l2 in enumerate(ls):
            st = mode_pair_state(l1, l2, geom, params)
            if projection is None:
                vals[i, j] = g2_classical(st)
            else:
                vals[i, j] = g2_multiphoton(st, params.theta, projection[0], projection[1], cap, **kw)
    kind = MapKind.CLASSICAL_G2 if projection is None else MapKind.MULTIPHOTON_G2
    return CorrelationMap(ls, ls, vals, kind, {"projection": projection})


def scan_photon_pairs(state: ModePairGaussian, theta: float, nmax: int, cap: int | None = None, **kw) -> CorrelationMap:
    vals = g2_multiphoton_grid(state, theta, nmax, cap, **kw)
    axis = list(range(nmax + 1))
    return CorrelationMap(axis, axis, vals, MapKind.MULTIPHOTON_G2, {"l1": state.l1, "l2": state.l2},
                          labels=("n1", "n2"))


def first_order_scan(geom: SlitGeometry, params: SourceParams, l1_range: Iterable[int],
                     photon_numbers: Sequence[int] = (0, 4, 7)) -> CorrelationMap:
    """Single-arm mean photon number and P(n) versus OAM (arm 1 after the splitter).

    Column 0 is the mean photon number 2 sigma_l + |mu_l|^2 of the unsplit mode;
    the remaining columns are the arm-1 probabilities for ``photon_numbers``.
    """
    l1s = list(l1_range)
    if not l1s:
        raise InvalidParameter("empty OAM range")
    rows = []
    top = max(photon_numbers) if photon_numbers else 0
    for l in l1s:
        st = mode_pair_state(l, l, geom, params)
        probs = arm_marginal(st, params.theta, 1, top)
        rows.append([st.mean_photons[0]] + [probs[n] for n in photon_numbers])
    return CorrelationMap(l1s, [-1, *photon_numbers], np.array(rows), MapKind.FIRST_ORDER,
                          {"columns": ["mean_photons"] + [f"P{n}" for n in photon_numbers]}, labels=("l1", "n"))


def fringe_contrast(curve: Sequence[float]) -> float:
    """(max - min)/(max + min) of a nonnegative curve."""
    return visibility(curve)
