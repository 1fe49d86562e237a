"""Fock-basis matrix elements of the beam-split complex-Gaussian mode pair.

The beam splitter maps (alpha, beta) to (alpha cos(theta), i beta sin(theta)).
The cos/sin scalings are absorbed into a transformed Gaussian (means scaled,
variances and covariance scaled quadratically), so the moment integrals always
carry the unit coherent-state weight exp(-|alpha|^2 - |beta|^2). The remaining
factor i^(L-M) is applied at the end.

For a genuinely two-mode state the integrand is decoupled by writing beta as
a linear function of alpha plus an independent residual B, and alpha as a
shifted A. Every moment then reduces to products of one-dimensional integrals
I(n, a, b) (see :mod:`oampnr.special`) weighted by binomial/multinomial sums.
"""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.signal import convolve2d

from .errors import DegenerateCovariance, InvalidParameter, OrderCapExceeded, PhotonCapExceeded, PrecisionLoss
from .source import ModePairGaussian
from .special import binomial_row, gaussian_moment_table, multinomial, phase_grouped

log = logging.getLogger(__name__)

PHOTON_CAP_DOUBLE = 25
PHOTON_CAP_MAX = 60
PRECISION_RTOL = 1e-6
EXTENDED_DPS = 40
_EPS = np.finfo(float).eps
_ZERO_ARM = 1e-12


@dataclass(frozen=True)
class AbstractedVars:
    """Scalars of the decoupled coordinate frame.

    alpha = A + (s1, s2);  beta = G A + B + (t3, t4)  with G = [[g11, g12], [g21, g22]].
    The integrand weight is
    pref * exp(-z0 |A|^2 - u.A - z1 B1^2 - z2 B2^2 - v.B - C).
    """

    x1: float
    x2: float
    y1: float
    y2: float
    z0: float
    z1: float
    z2: float
    u1: float
    u2: float
    v1: float
    v2: float
    C: float
    theta: float
    s1: float
    s2: float
    t3: float
    t4: float
    g11: float
    g12: float
    g21: float
    g22: float
    pref: float
    factorized: bool = False

    def __post_init__(self):
        if not self.z0 > 0:
            raise DegenerateCovariance(f"z0 = {self.z0} must be positive")


def arm_scaled(state: ModePairGaussian, theta: float):
    """Moments of (alpha cos(theta), beta sin(theta))."""
    c, s = math.cos(theta), math.sin(theta)
    return (state.mu1 * c, state.mu2 * s, state.sigma1 * c * c, state.sigma2 * s * s, state.eta * c * s)


def abstracted_vars(state: ModePairGaussian, theta: float) -> AbstractedVars:
    if state.single_mode:
        raise DegenerateCovariance("single-mode pair has no decoupled two-mode frame")
    ma, mb, s1, s2, eta = arm_scaled(state, theta)
    det = s1 * s2 - abs(eta) ** 2
    if s1 <= 0 or s2 <= 0 or det <= 1e-14 * s1 * s2:
        raise DegenerateCovariance(f"beam-split covariance is singular (det={det:.3e}, theta={theta})")
    x1 = s1 / (2 * det)
    x2 = s2 / (2 * det)
    y = eta / (2 * det)
    p1 = 1.0 + x1
    q = x2 - abs(y) ** 2 / p1
    z0 = 1.0 + q
    w = q * ma - y * mb / p1
    c0 = q * abs(ma) ** 2 - 2 * (ma.conjugate() * y * mb).real / p1 + x1 * abs(mb) ** 2 / p1
    # centre both frames on the Gaussian mean so the linear terms vanish
    shift_a = w / z0
    shift_b = (x1 * mb + y.conjugate() * (shift_a - ma)) / p1
    lin = z0 * shift_a - w
    r = 0j
    C = c0 - abs(w) ** 2 / z0
    return AbstractedVars(
        x1=x1, x2=x2, y1=y.real, y2=y.imag, z0=z0, z1=p1, z2=p1,
        u1=2 * lin.real, u2=2 * lin.imag, v1=-2 * p1 * r.real, v2=-2 * p1 * r.imag, C=C, theta=theta,
        s1=shift_a.real, s2=shift_a.imag, t3=shift_b.real, t4=shift_b.imag,
        g11=y.real / p1, g12=y.imag / p1, g21=-y.imag / p1, g22=y.real / p1,
        pref=1.0 / (4 * math.pi**2 * det), factorized=(eta == 0),
    )


class _Tables:
    """Building blocks of the moment sums for one decoupled frame.

    ``G1[n][j] = sum_a C(n,a) s1^(n-a) I(a+j; z0, u1)`` (likewise G2 for A2),
    ``H[k][c1, c2]`` sums the beta1 multinomial over the B1 power,
    ``D[l][d1, d2]`` the same for beta2, and ``T[k, l]`` is the 2D convolution
    of H[k] with D[l] over the shared A1/A2 powers.
    """

    def __init__(self, v: AbstractedVars, order: int, mp: bool = False, memo: bool = True):
        self.v = v
        self.order = order
        self.mp = mp
        self.memo = memo
        self._lock = threading.Lock()
        self._g1: dict = {}
        self._g2: dict = {}
        self._h: dict = {}
        self._d: dict = {}
        self._t: dict = {}
        self._f: dict = {}
        num = (lambda x: mpmath.mpf(x)) if mp else float
        self.num = num
        self.s1, self.s2, self.t3, self.t4 = (num(x) for x in (v.s1, v.s2, v.t3, v.t4))
        self.g = tuple(num(x) for x in (v.g11, v.g12, v.g21, v.g22))
        self.scale = num(v.pref) * (mpmath.exp(-mpmath.mpf(v.C)) if mp else math.exp(-v.C))
        if memo:
            self._ia1 = gaussian_moment_table(4 * order, v.z0, v.u1, mp=mp)
            self._ia2 = gaussian_moment_table(4 * order, v.z0, v.u2, mp=mp)
            self._ib1 = gaussian_moment_table(2 * order, v.z1, v.v1, mp=mp)
            self._ib2 = gaussian_moment_table(2 * order, v.z2, v.v2, mp=mp)

    def _arr(self, rows):
        return np.array(rows, dtype=object if self.mp else float)

    def _itab(self, which, n):
        if self.memo:
            return getattr(self, "_" + which)
        v = self.v
        a, b = {"ia1": (v.z0, v.u1), "ia2": (v.z0, v.u2), "ib1": (v.z1, v.v1), "ib2": (v.z2, v.v2)}[which]
        return gaussian_moment_table(n, a, b, mp=self.mp)

    def _cached(self, store, key, build):
        if not self.memo:
            return build()
        with self._lock:
            hit = store.get(key)
        if hit is None:
            hit = build()
            with self._lock:
                store[key] = hit
        return hit

    def shifted(self, which: str, n: int, jmax: int):
        """G-vector for alpha_1 (which='a1') or alpha_2 (which='a2'), length jmax+1."""
        store, tab, shift = (self._g1, "ia1", self.s1) if which == "a1" else (self._g2, "ia2", self.s2)

        def build():
            moments = self._itab(tab, n + jmax)
            if not self.mp:
                terms = np.array([math.comb(n, a) * shift ** (n - a) for a in range(n + 1)])
                hank = np.array(moments[: n + jmax + 1])[np.arange(jmax + 1)[:, None] + np.arange(n + 1)[None, :]]
                return hank @ terms, np.abs(hank) @ np.abs(terms)
            coef = binomial_row(n)
            pw = [shift**e for e in range(n + 1)]
            out = []
            mag = []
            for j in range(jmax + 1):
                acc = self.num(0)
                am = 0.0
                for a in range(n + 1):
                    term = coef[a] * pw[n - a] * moments[a + j]
                    acc += term
                    am += abs(float(term))
                out.append(acc)
                mag.append(am)
            return self._arr(out), np.array(mag)

        key = (n, jmax)
        return self._cached(store, key, build)

    def mixed(self, which: str, k: int):
        """H (which='b1') or D (which='b2') matrix over the A1/A2 powers."""
        if which == "b1":
            store, tab, ga, gb, tail = self._h, "ib1", self.g[0], self.g[1], self.t3
        else:
            store, tab, ga, gb, tail = self._d, "ib2", self.g[2], self.g[3], self.t4

        def build():
            ib = self._itab(tab, k)
            if not self.mp:
                return self._mixed_fast(ib, ga, gb, tail, k)
            pa = [ga**e for e in range(k + 1)]
            pb = [gb**e for e in range(k + 1)]
            pt = [tail**e for e in range(k + 1)]
            out = [[self.num(0)] * (k + 1) for _ in range(k + 1)]
            mag = [[0.0] * (k + 1) for _ in range(k + 1)]
            for c1 in range(k + 1):
                for c2 in range(k + 1 - c1):
                    acc = self.num(0)
                    am = 0.0
                    for c3 in range(k + 1 - c1 - c2):
                        term = multinomial(k, c1, c2, c3) * pa[c1] * pb[c2] * ib[c3] * pt[k - c1 - c2 - c3]
                        acc += term
                        am += abs(float(term))
                    out[c1][c2] = acc
                    mag[c1][c2] = am
            return self._arr(out), np.array(mag)

        return self._cached(store, k, build)

    @staticmethod
    def _mixed_fast(ib, ga, gb, tail, k):
        # multinomial sum factorised as k! ga^c1/c1! gb^c2/c2! w[k-c1-c2],
        # w[r] = sum_c3 ib[c3]/c3! tail^(r-c3)/(r-c3)!
        fact = np.array([math.factorial(e) for e in range(k + 1)], dtype=float)
        e = np.arange(k + 1)
        ib = np.array(ib[: k + 1], dtype=float) / fact
        tl = float(tail) ** e / fact
        w = np.convolve(ib, tl)[: k + 1]
        wm = np.convolve(np.abs(ib), np.abs(tl))[: k + 1]
        pa = float(ga) ** e / fact
        pb = float(gb) ** e / fact
        r = k - e[:, None] - e[None, :]
        valid = r >= 0
        rr = np.where(valid, r, 0)
        kf = float(math.factorial(k))
        out = np.where(valid, kf * np.outer(pa, pb) * w[rr], 0.0)
        mag = np.where(valid, kf * np.outer(np.abs(pa), np.abs(pb)) * wm[rr], 0.0)
        return out, mag

    def coupled(self, k: int, l: int):
        """T[k, l]: convolution of H[k] and D[l] (values, magnitudes)."""

        def build():
            h, hm = self.mixed("b1", k)
            d, dm = self.mixed("b2", l)
            if self.mp:
                out = np.empty((k + l + 1, k + l + 1), dtype=object)
                out[...] = mpmath.mpf(0)
                for c1 in range(k + 1):
                    for c2 in range(k + 1 - c1):
                        out[c1 : c1 + l + 1, c2 : c2 + l + 1] += h[c1, c2] * d
            else:
                out = convolve2d(h, d)
            return out, convolve2d(hm, dm)

        return self._cached(self._t, (k, l), build)

    def f(self, n: int, m: int, k: int, l: int):
        """Moment integral and a magnitude bound for its rounding error."""
        if max(n, m) > 2 * self.order or max(k, l) > 2 * self.order:
            raise OrderCapExceeded(f"moment ({n},{m},{k},{l}) exceeds order cap {2 * self.order}")

        def build():
            j = k + l
            t, tm = self.coupled(k, l)
            g1, g1m = self.shifted("a1", n, j)
            g2, g2m = self.shifted("a2", m, j)
            val = g1.dot(t).dot(g2) * self.scale
            if self.mp:
                return val, 0.0
            mag = g1m.dot(tm).dot(g2m) * self.scale
            return float(val), float(mag)

        return self._cached(self._f, (n, m, k, l), build)


class FockEvaluator:
    """Evaluation context for one (state, theta): caches the moment tables.

    ``precision`` is 'double', 'extended' or 'auto' (double with an
    extended-precision retry on :class:`PrecisionLoss`).
    """

    def __init__(self, state: ModePairGaussian, theta: float, photon_cap: int = 20,
                 memo: bool = True, precision: str = "auto", extended_dps: int = EXTENDED_DPS):
        if precision not in ("double", "extended", "auto"):
            raise InvalidParameter(f"unknown precision mode {precision!r}")
        if photon_cap > PHOTON_CAP_MAX:
            raise PhotonCapExceeded(f"photon cap {photon_cap} exceeds {PHOTON_CAP_MAX}")
        if photon_cap > PHOTON_CAP_DOUBLE and precision == "double":
            raise PhotonCapExceeded(f"photon cap {photon_cap} needs extended precision")
        self.state = state
        self.theta = float(theta)
        self.photon_cap = photon_cap
        self.memo = memo
        self.precision = "extended" if photon_cap > PHOTON_CAP_DOUBLE and precision == "auto" else precision
        self.extended_dps = extended_dps
        self.fallbacks = 0
        c, s = math.cos(self.theta), math.sin(self.theta)
        self._arm1_dark = abs(c) < _ZERO_ARM
        self._arm2_dark = abs(s) < _ZERO_ARM
        self.mode = self._pick_mode()
        self._tables: dict[bool, _Tables] = {}
        if self.mode == "coupled":
            self.vars = abstracted_vars(state, self.theta)

    def _pick_mode(self) -> str:
        st = self.state
        if st.single_mode:
            return "single"
        if self._arm1_dark or self._arm2_dark or st.eta == 0:
            return "factorized"
        return "coupled"

    def tables(self, mp: bool) -> _Tables:
        if not self.memo:
            return _Tables(self.vars, self.photon_cap, mp=mp, memo=False)
        tab = self._tables.get(mp)
        if tab is None:
            tab = self._tables[mp] = _Tables(self.vars, self.photon_cap, mp=mp, memo=True)
        return tab

    def _check(self, *idx):
        if min(idx) < 0:
            raise InvalidParameter("photon numbers must be nonnegative")
        if max(idx) > self.photon_cap:
            raise PhotonCapExceeded(f"photon number {max(idx)} exceeds cap {self.photon_cap}")

    def element(self, N: int, M: int, K: int, L: int) -> complex:
        """Tr[rho |N,M><K,L|]."""
        self._check(N, M, K, L)
        if self.mode == "single":
            return self._single_mode(N, M, K, L)
        if self.mode == "factorized":
            return self._factorized(N, M, K, L)
        if self.precision == "extended":
            return self._coupled_mp(N, M, K, L)
        try:
            return self._coupled_double(N, M, K, L)
        except PrecisionLoss:
            if self.precision == "double":
                raise
            self.fallbacks += 1
            log.debug("precision fallback at (%d,%d,%d,%d)", N, M, K, L)
            return self._coupled_mp(N, M, K, L)

    # -- coupled two-mode path ------------------------------------------------

    def _norm_phase(self, N, M, K, L):
        phase = (1, 1j, -1, -1j)[(L - M) % 4]
        return phase / math.sqrt(math.factorial(N) * math.factorial(K) * math.factorial(M) * math.factorial(L))

    def _coupled_double(self, N, M, K, L):
        tab = self.tables(False)
        ca = phase_grouped(N, K)
        cb = phase_grouped(M, L)
        re = im = mag = 0.0
        for s, (ar, ai) in enumerate(ca):
            if ar == 0 and ai == 0:
                continue
            for t, (br, bi) in enumerate(cb):
                if br == 0 and bi == 0:
                    continue
                fv, fm = tab.f(s, N + K - s, t, M + L - t)
                wr = ar * br - ai * bi
                wi = ar * bi + ai * br
                re += wr * fv
                im += wi * fv
                mag += (abs(wr) + abs(wi)) * fm
        val = complex(re, im)
        # rounding bound: magnitudes times a modest multiple of machine epsilon
        err = 64 * _EPS * mag
        if err > PRECISION_RTOL * abs(val) and err > 1e-300:
            raise PrecisionLoss(f"element ({N},{M},{K},{L}): error bound {err:.2e} vs |value| {abs(val):.2e}")
        return val * self._norm_phase(N, M, K, L)

    def _coupled_mp(self, N, M, K, L):
        with mpmath.workdps(self.extended_dps):
            tab = self.tables(True)
            re = mpmath.mpf(0)
            im = mpmath.mpf(0)
            for s, (ar, ai) in enumerate(phase_grouped(N, K)):
                if ar == 0 and ai == 0:
                    continue
                for t, (br, bi) in enumerate(phase_grouped(M, L)):
                    if br == 0 and bi == 0:
                        continue
                    fv, _ = tab.f(s, N + K - s, t, M + L - t)
                    re += (ar * br - ai * bi) * fv
                    im += (ar * bi + ai * br) * fv
            val = complex(float(re), float(im))
        return val * self._norm_phase(N, M, K, L)

    # -- separable paths ------------------------------------------------------

    def _single_mode(self, N, M, K, L):
        st = self.state
        c, s = math.cos(self.theta), math.sin(self.theta)
        amp = single_mode_moment(K + L, N + M, st.mu1, st.sigma1)
        # i^(L-M) from the second arm's i*beta, folded into _norm_phase
        return amp * c ** (N + K) * s ** (M + L) * self._norm_phase(N, M, K, L)

    def _factorized(self, N, M, K, L):
        ma, mb, s1, s2, _ = arm_scaled(self.state, self.theta)
        if self._arm2_dark:
            if M or L:
                return 0j
            return single_mode_moment(K, N, ma, s1) / math.sqrt(math.factorial(N) * math.factorial(K))
        if self._arm1_dark:
            if N or K:
                return 0j
            return single_mode_moment(L, M, mb, s2) * self._norm_phase(0, M, 0, L)
        a = single_mode_moment(K, N, ma, s1)
        b = single_mode_moment(L, M, mb, s2)
        return a * b * self._norm_phase(N, M, K, L)

    # -- distributions --------------------------------------------------------

    def joint_probabilities(self, nmax: int, mmax: int) -> np.ndarray:
        out = np.empty((nmax + 1, mmax + 1))
        for n in range(nmax + 1):
            for m in range(mmax + 1):
                out[n, m] = self.element(n, m, n, m).real
        return out


def single_mode_moment(p: int, q: int, mu: complex, sigma: float) -> complex:
    """int P(alpha) exp(-|alpha|^2) alpha^p conj(alpha)^q d^2 alpha for one complex-Gaussian mode.

    ``sigma`` is the per-quadrature variance (mean photon number 2 sigma + |mu|^2).
    """
    if sigma <= 0:
        raise DegenerateCovariance("single-mode variance must be positive")
    z = 1.0 + 1.0 / (2 * sigma)
    centre = mu / (2 * sigma * z)
    base = math.exp(-abs(mu) ** 2 / (1 + 2 * sigma)) / (2 * sigma * z)
    total = 0j
    for j in range(min(p, q) + 1):
        total += (math.comb(p, j) * math.comb(q, j) * math.factorial(j) / z**j) * centre ** (p - j) * centre.conjugate() ** (q - j)
    return base * total


_EVAL_CACHE: dict = {}
_EVAL_LOCK = threading.Lock()


def evaluator(state: ModePairGaussian, theta: float, photon_cap: int = 20, **kw) -> FockEvaluator:
    """Shared evaluation context for (state, theta, cap)."""
    key = (state.digest(), float(theta), photon_cap, tuple(sorted(kw.items())))
    with _EVAL_LOCK:
        ev = _EVAL_CACHE.get(key)
        if ev is None:
            if len(_EVAL_CACHE) > 256:
                _EVAL_CACHE.clear()
            ev = _EVAL_CACHE[key] = FockEvaluator(state, theta, photon_cap, **kw)
    return ev


def f_moment(vars: AbstractedVars, n: int, m: int, k: int, l: int, order_cap: int = 40) -> float:
    """int P e^{-|alpha|^2-|beta|^2} a1^n a2^m b1^k b2^l over the beam-split frame ``vars``."""
    if n + m + k + l > 4 * order_cap:
        raise OrderCapExceeded(f"total order {n + m + k + l} exceeds {4 * order_cap}")
    cap = max(n, m, k, l, 1)
    return _Tables(vars, cap, memo=False).f(n, m, k, l)[0]


def fock_matrix_element(state: ModePairGaussian, theta: float, N: int, M: int, K: int, L: int,
                        photon_cap: int = PHOTON_CAP_DOUBLE, **kw) -> complex:
    return evaluator(state, theta, photon_cap, **kw).element(N, M, K, L)
