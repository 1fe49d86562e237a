"""Sampling oracle: draws P-function amplitudes and Poisson photon counts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import DegenerateCovariance, InvalidParameter
from .source import ModePairGaussian


@dataclass(frozen=True)
class McConfig:
    sample_count: int = 10**6
    seed: int = 20240101
    batch: int = 2**16

    def __post_init__(self):
        if self.sample_count <= 0 or self.batch <= 0:
            raise InvalidParameter("sample_count and batch must be positive")


@dataclass
class EmpiricalDistribution:
    counts: np.ndarray
    total: int
    overflow: int = 0

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.total

    @property
    def stderr_map(self) -> np.ndarray:
        p = self.probs
        return np.sqrt(p * (1 - p) / self.total)

    def merge(self, other: "EmpiricalDistribution") -> "EmpiricalDistribution":
        if self.counts.shape != other.counts.shape:
            raise InvalidParameter("cannot merge histograms of different shape")
        return EmpiricalDistribution(self.counts + other.counts, self.total + other.total, self.overflow + other.overflow)


def _factor(state: ModePairGaussian) -> np.ndarray:
    """Symmetric square root of the 4x4 covariance."""
    if not state.single_mode and state.det <= 1e-14 * state.sigma1 * state.sigma2:
        raise DegenerateCovariance("mode pair covariance is singular")
    w, v = np.linalg.eigh(state.gamma)
    if w.min() < -1e-12 * w.sum():
        raise DegenerateCovariance(f"covariance has negative eigenvalue {w.min():.3e}")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _batch_rng(seed: int, index: int) -> np.random.Generator:
    # child ``index`` of SeedSequence(seed).spawn(...), rebuilt without the parent
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def _batch_sizes(cfg: McConfig) -> list[int]:
    n_batches = math.ceil(cfg.sample_count / cfg.batch)
    return [min(cfg.batch, cfg.sample_count - i * cfg.batch) for i in range(n_batches)]


def _draw(state: ModePairGaussian, root: np.ndarray, size: int, rng: np.random.Generator):
    r = state.mean_vector + rng.standard_normal((size, 4)) @ root
    return r[:, 0] + 1j * r[:, 1], r[:, 2] + 1j * r[:, 3]


def sample_amplitudes(state: ModePairGaussian, cfg: McConfig) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield batches of (alpha, beta) amplitude arrays."""
    root = _factor(state)
    for i, size in enumerate(_batch_sizes(cfg)):
        yield _draw(state, root, size, _batch_rng(cfg.seed, i))


def _count_batch(args) -> tuple[np.ndarray, int]:
    state, root, theta, cap, seed, index, size = args
    rng = _batch_rng(seed, index)
    alpha, beta = _draw(state, root, size, rng)
    n1 = rng.poisson(np.abs(alpha) ** 2 * math.cos(theta) ** 2)
    n2 = rng.poisson(np.abs(beta) ** 2 * math.sin(theta) ** 2)
    inside = (n1 <= cap) & (n2 <= cap)
    counts = np.zeros((cap + 1, cap + 1), dtype=np.int64)
    np.add.at(counts, (n1[inside], n2[inside]), 1)
    return counts, int(size - inside.sum())


def sample_joint_pnr(state: ModePairGaussian, theta: float, cfg: McConfig, cap: int = 40,
                     workers: int = 1) -> EmpiricalDistribution:
    """Histogram of Poisson counts drawn on the sampled arm intensities.

    Batches use independent child streams, so the histogram does not depend
    on ``workers``.
    """
    root = _factor(state)
    jobs = [(state, root, theta, cap, cfg.seed, i, size) for i, size in enumerate(_batch_sizes(cfg))]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_count_batch, jobs))
    else:
        parts = [_count_batch(j) for j in jobs]
    out = EmpiricalDistribution(np.zeros((cap + 1, cap + 1), dtype=np.int64), 0, 0)
    for (counts, over), job in zip(parts, jobs):
        out = out.merge(EmpiricalDistribution(counts, job[-1], over))
    return out


def _jackknife_ratio(i1: np.ndarray, i2: np.ndarray, blocks: int = 100) -> tuple[float, float]:
    n = len(i1) - len(i1) % blocks
    a = (i1[:n] * i2[:n]).reshape(blocks, -1).sum(axis=1)
    b = i1[:n].reshape(blocks, -1).sum(axis=1)
    c = i2[:n].reshape(blocks, -1).sum(axis=1)
    full = a.sum() * n / (b.sum() * c.sum())
    m = n - n // blocks
    loo = (a.sum() - a) * m / ((b.sum() - b) * (c.sum() - c))
    err = math.sqrt((blocks - 1) / blocks * np.sum((loo - loo.mean()) ** 2))
    return float(full), err


def estimate_g2_classical(state: ModePairGaussian, theta: float, cfg: McConfig) -> tuple[float, float]:
    """<I1 I2>/(<I1><I2>) over sampled arm intensities, with a block-jackknife stderr."""
    c2, s2 = math.cos(theta) ** 2, math.sin(theta) ** 2
    i1s, i2s = [], []
    for alpha, beta in sample_amplitudes(state, cfg):
        i1s.append(np.abs(alpha) ** 2 * c2)
        i2s.append(np.abs(beta) ** 2 * s2)
    return _jackknife_ratio(np.concatenate(i1s), np.concatenate(i2s))


def estimate_count_g2(emp: EmpiricalDistribution) -> float:
    """<n1 n2>/(<n1><n2>) of photon counts (equals the intensity g2 for Poisson detection)."""
    p = emp.probs
    n = np.arange(p.shape[0])
    m = np.arange(p.shape[1])
    return float(n @ p @ m / ((n @ p.sum(axis=1)) * (m @ p.sum(axis=0))))


def tv_distance(analytic: np.ndarray, emp: EmpiricalDistribution) -> tuple[float, float]:
    """Total-variation distance and its aggregate binomial stderr scale.

    Cells outside the analytic grid count toward the empirical overflow.
    """
    a = np.asarray(analytic, dtype=float)
    k, l = a.shape
    pe = emp.probs
    inner = pe[:k, :l]
    outside = 1.0 - inner.sum()
    tv = 0.5 * (np.abs(inner - a).sum() + abs(outside - max(0.0, 1.0 - a.sum())))
    agg = 0.5 * np.sqrt(a * (1 - a) / emp.total).sum()
    return float(tv), float(agg)


@dataclass
class ConsistencyReport:
    tv: float
    tv_stderr: float
    g2_mc: float
    g2_mc_stderr: float
    g2_analytic: float
    cells_checked: int
    cells_inside: int
    rows: list = field(default_factory=list)

    @property
    def tv_ok(self) -> bool:
        return self.tv < 3 * self.tv_stderr

    @property
    def g2_ok(self) -> bool:
        return abs(self.g2_mc - self.g2_analytic) <= 3 * self.g2_mc_stderr

    @property
    def coverage(self) -> float:
        return self.cells_inside / self.cells_checked if self.cells_checked else 1.0

    @property
    def passed(self) -> bool:
        return self.tv_ok and self.g2_ok


def consistency(analytic: np.ndarray, emp: EmpiricalDistribution, g2_analytic: float,
                g2_mc: tuple[float, float]) -> ConsistencyReport:
    tv, agg = tv_distance(analytic, emp)
    a = np.asarray(analytic)
    k, l = a.shape
    pe = emp.probs[:k, :l]
    expected = a * emp.total
    mask = expected >= 25
    band = 3 * np.sqrt(a * (1 - a) / emp.total)
    inside = int(np.sum(np.abs(pe - a)[mask] <= band[mask]))
    rows = [(n, m, float(a[n, m]), float(pe[n, m]), float(math.sqrt(max(a[n, m] * (1 - a[n, m]), 0) / emp.total)))
            for n in range(k) for m in range(l)]
    return ConsistencyReport(tv, agg, g2_mc[0], g2_mc[1], g2_analytic, int(mask.sum()), inside, rows)
