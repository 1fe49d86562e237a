"""Random optical fields from Kolmogorov phase screens, and their OAM content."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientFrames, InvalidParameter
from .source import SlitGeometry, SlitKind

MIN_FRAMES = 100
P_MAX_DEFAULT = 10
WAVELENGTH_NM = 532.0  # metadata only


@dataclass(frozen=True)
class GridSpec:
    """Square grid centred on the optical axis, lengths in beam-waist units.

    Samples sit at half-integer offsets so the axis falls on a plaquette centre.
    """

    n_pixels: int = 512
    extent: float = 16.0

    def __post_init__(self):
        if self.n_pixels < 8 or self.n_pixels & (self.n_pixels - 1):
            raise InvalidParameter(f"n_pixels must be a power of two >= 8, got {self.n_pixels}")
        if not self.extent > 0:
            raise InvalidParameter("extent must be positive")

    @property
    def dx(self) -> float:
        return self.extent / self.n_pixels

    @property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n_pixels) - (self.n_pixels - 1) / 2) * self.dx

    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        return _polar(self.n_pixels, self.extent)


@lru_cache(maxsize=4)
def _polar(n: int, extent: float):
    x = (np.arange(n) - (n - 1) / 2) * (extent / n)
    xx, yy = np.meshgrid(x, x, indexing="xy")
    r = np.hypot(xx, yy)
    phi = np.arctan2(yy, xx)
    r.setflags(write=False)
    phi.setflags(write=False)
    return r, phi


@dataclass
class FieldFrame:
    grid: GridSpec
    values: np.ndarray
    frame_id: int = 0

    def __post_init__(self):
        if self.values.shape != (self.grid.n_pixels,) * 2:
            raise InvalidParameter("field shape does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise InvalidParameter("field contains non-finite values")

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dx**2)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _kolmogorov_psd(f, r0):
    return 0.023 * r0 ** (-5.0 / 3.0) * f ** (-11.0 / 3.0)


def kolmogorov_screen(grid: GridSpec, r0: float, seed=None, subharmonics: int = 0) -> np.ndarray:
    """Phase screen in radians with PSD 0.023 r0^(-5/3) f^(-11/3), f in cycles per unit length.

    The f = 0 term is zero. ``subharmonics`` > 0 adds that many 3x3 levels of
    sub-grid frequencies to restore the large-scale power the FFT grid misses.
    """
    if not r0 > 0:
        raise InvalidParameter(f"Fried parameter must be positive, got {r0}")
    n, dx = grid.n_pixels, grid.dx
    df = 1.0 / (n * dx)
    f = np.fft.fftfreq(n, d=dx)
    fmag = np.hypot(f[:, None], f[None, :])
    fmag[0, 0] = 1.0
    psd = _kolmogorov_psd(fmag, r0)
    psd[0, 0] = 0.0
    rng = _rng(seed)
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    # ifft2 carries 1/n^2; undo it so the screen is the plain Fourier sum
    screen = np.real(np.fft.ifft2(m * np.sqrt(psd) * df)) * n * n
    if subharmonics:
        x = grid.axis
        low = np.zeros((n, n))
        for p in range(1, subharmonics + 1):
            dfp = df / 3**p
            for i in (-1, 0, 1):
                for j in (-1, 0, 1):
                    if i == 0 and j == 0:
                        continue
                    fx, fy = i * dfp, j * dfp
                    c = (rng.standard_normal() + 1j * rng.standard_normal()) * math.sqrt(
                        _kolmogorov_psd(math.hypot(fx, fy), r0)) * dfp
                    low += np.real(c * np.outer(np.exp(2j * math.pi * fy * x), np.exp(2j * math.pi * fx * x)))
        screen = screen + low - low.mean()
    return screen


def gaussian_beam(grid: GridSpec, w0: float = 1.0) -> np.ndarray:
    r, _ = grid.polar()
    return math.sqrt(2 / math.pi) / w0 * np.exp(-(r**2) / w0**2)


def synthesize_frame(grid: GridSpec, w0: float, screen: np.ndarray | None, bias: float = 0.0,
                     frame_id: int = 0) -> FieldFrame:
    """Gaussian beam through the screen; ``bias`` mixes in an unmodulated copy.

    E = G [(1 - bias) exp(i Phi) + bias].
    """
    if not 0.0 <= bias <= 1.0:
        raise InvalidParameter("bias must lie in [0, 1]")
    g = gaussian_beam(grid, w0)
    mod = np.ones_like(g, dtype=complex) if screen is None else np.exp(1j * screen)
    return FieldFrame(grid, g * ((1.0 - bias) * mod + bias), frame_id)


def seeded_frame(grid: GridSpec, w0: float, r0: float, seed: int, index: int, bias: float = 0.0,
                 subharmonics: int = 0) -> FieldFrame:
    """Frame ``index`` of the sequence for ``seed``; each frame owns an independent substream."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))
    return synthesize_frame(grid, w0, kolmogorov_screen(grid, r0, rng, subharmonics), bias, index)


def generate_frames(grid: GridSpec, w0: float, r0: float, n_frames: int, seed: int = 0,
                    bias: float = 0.0, subharmonics: int = 0) -> list[FieldFrame]:
    return [seeded_frame(grid, w0, r0, seed, i, bias, subharmonics) for i in range(n_frames)]


def genlaguerre(p: int, a: int, x: np.ndarray) -> np.ndarray:
    """Associated Laguerre polynomial L_p^a(x) by the three-term recurrence."""
    prev = np.ones_like(x)
    if p == 0:
        return prev
    cur = 1.0 + a - x
    for k in range(1, p):
        prev, cur = cur, ((2 * k + 1 + a - x) * cur - (k + a) * prev) / (k + 1)
    return cur


def lg_mode(l: int, p: int, grid: GridSpec, w0: float = 1.0, p_max: int = P_MAX_DEFAULT) -> np.ndarray:
    if p < 0 or p > p_max:
        raise InvalidParameter(f"radial index must lie in [0, {p_max}], got {p}")
    r, phi = grid.polar()
    al = abs(l)
    norm = math.sqrt(2 * math.factorial(p) / (math.pi * math.factorial(p + al))) / w0
    rho = math.sqrt(2) * r / w0
    radial = norm * rho**al * genlaguerre(p, al, rho**2) * np.exp(-(r**2) / w0**2)
    return radial * np.exp(1j * l * phi)


def slit_mask(grid: GridSpec, geom: SlitGeometry | None) -> np.ndarray:
    if geom is None:
        return np.ones((grid.n_pixels,) * 2)
    _, phi = grid.polar()
    half = geom.width_w / 2
    d0 = np.abs(np.remainder(phi + math.pi, 2 * math.pi) - math.pi)
    mask = d0 <= half
    if geom.kind is SlitKind.DOUBLE:
        d1 = np.abs(np.remainder(phi - geom.separation_phi0 + math.pi, 2 * math.pi) - math.pi)
        mask |= d1 <= half
    return mask.astype(float)


def _oam_kernel(l: int, grid: GridSpec, w0: float, p_max: int, basis: str) -> np.ndarray:
    if basis == "angular":
        _, phi = grid.polar()
        return np.exp(1j * l * phi) / math.sqrt(2 * math.pi)
    if basis == "lg":
        return sum(lg_mode(l, p, grid, w0, p_max) for p in range(p_max + 1))
    raise InvalidParameter(f"unknown projection basis {basis!r}")


def project_onto_oam(frame: FieldFrame, l: int, p_max: int = P_MAX_DEFAULT, geom: SlitGeometry | None = None,
                     w0: float = 1.0, basis: str = "angular") -> complex:
    """OAM-l amplitude of the slit-masked field E S.

    ``basis="lg"`` sums <LG_p^l, E S> over p <= p_max. That sum weights the
    radial profile differently for each |l|, so the default ``"angular"``
    projects onto exp(i l phi)/sqrt(2 pi) with a flat radial weight, the
    form behind the closed-form mode statistics.
    """
    g = frame.grid
    field = frame.values * slit_mask(g, geom)
    return complex(np.vdot(_oam_kernel(l, g, w0, p_max, basis), field) * g.dx**2)


def lg_coefficients(frame: FieldFrame, ls: Sequence[int], p_max: int = P_MAX_DEFAULT,
                    geom: SlitGeometry | None = None, w0: float = 1.0) -> np.ndarray:
    """Individual overlaps <LG_p^l, E S> as an array indexed [l, p]."""
    g = frame.grid
    field = frame.values * slit_mask(g, geom)
    return np.array([[np.vdot(lg_mode(l, p, g, w0, p_max), field) * g.dx**2 for p in range(p_max + 1)] for l in ls])


def project_frames(frames: Iterable[FieldFrame], ls: Sequence[int], p_max: int = P_MAX_DEFAULT,
                   geom: SlitGeometry | None = None, w0: float = 1.0, basis: str = "angular") -> np.ndarray:
    """Projected amplitudes as an array indexed [frame, l].

    ``frames`` may be a generator; the kernels are built once and frames are
    consumed one at a time.
    """
    out = []
    kern = None
    for f in frames:
        if kern is None:
            g = f.grid
            mask = slit_mask(g, geom).ravel()
            kern = np.array([_oam_kernel(l, g, w0, p_max, basis).ravel() for l in ls]).conj() * mask * g.dx**2
        out.append(kern @ f.values.ravel())
    return np.array(out) if out else np.zeros((0, len(ls)), dtype=complex)


@dataclass
class ModeStatistics:
    mu1: complex
    mu2: complex
    sigma1: float
    sigma2: float
    eta: complex
    errors: dict


def _jackknife(fn, a: np.ndarray, b: np.ndarray, blocks: int = 20):
    n = len(a) - len(a) % blocks
    idx = np.arange(n).reshape(blocks, -1)
    full = fn(a[:n], b[:n])
    loo = [fn(np.delete(a[:n], i), np.delete(b[:n], i)) for i in idx]
    loo = np.array(loo)
    spread = np.sqrt((blocks - 1) / blocks * np.sum(np.abs(loo - loo.mean(axis=0)) ** 2, axis=0))
    return full, spread


def _moments(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    da, db = a - a.mean(), b - b.mean()
    # per-quadrature variances and the half cross-covariance
    return np.array([a.mean(), b.mean(), 0.5 * np.mean(np.abs(da) ** 2), 0.5 * np.mean(np.abs(db) ** 2),
                     0.5 * np.mean(da * db.conj())])


def statistics_from_amplitudes(a: np.ndarray, b: np.ndarray) -> ModeStatistics:
    if len(a) < MIN_FRAMES:
        raise InsufficientFrames(f"need at least {MIN_FRAMES} frames, got {len(a)}")
    vals, errs = _jackknife(_moments, np.asarray(a), np.asarray(b))
    names = ("mu1", "mu2", "sigma1", "sigma2", "eta")
    return ModeStatistics(complex(vals[0]), complex(vals[1]), float(vals[2].real), float(vals[3].real),
                          complex(vals[4]), {k: float(e) for k, e in zip(names, errs)})


def empirical_statistics(frames: Sequence[FieldFrame], l1: int, l2: int, geom: SlitGeometry | None = None,
                         p_max: int = P_MAX_DEFAULT, w0: float = 1.0, basis: str = "angular") -> ModeStatistics:
    if len(frames) < MIN_FRAMES:
        raise InsufficientFrames(f"need at least {MIN_FRAMES} frames, got {len(frames)}")
    amps = project_frames(frames, [l1, l2], p_max, geom, w0, basis)
    return statistics_from_amplitudes(amps[:, 0], amps[:, 1])


def intensity_ratio(amps: np.ndarray) -> float:
    """<I^2>/<I>^2 of |amplitude|^2."""
    i = np.abs(amps) ** 2
    return float(np.mean(i**2) / np.mean(i) ** 2)


def fit_bandwidth(ls: Sequence[int], sigmas: Sequence[float]) -> tuple[float, float]:
    """Least-squares fit of sigma_l = A exp(-l^2/lambda); returns (A, lambda)."""
    ls = np.asarray(ls, dtype=float)
    y = np.log(np.asarray(sigmas, dtype=float))
    slope, icpt = np.polyfit(ls**2, y, 1)
    return float(math.exp(icpt)), float(-1.0 / slope) if slope < 0 else math.inf


def structure_function(screens: Sequence[np.ndarray], lags: Sequence[int]) -> np.ndarray:
    """Ensemble phase structure function along both axes at integer pixel lags."""
    out = []
    for d in lags:
        acc = [np.mean((s[:, d:] - s[:, :-d]) ** 2) + np.mean((s[d:, :] - s[:-d, :]) ** 2) for s in screens]
        out.append(0.5 * float(np.mean(acc)))
    return np.array(out)


def _centred_ramp(m: int, sign: float) -> np.ndarray:
    c = (m - 1) / 2
    return np.exp(sign * 2j * math.pi * c * np.arange(m) / m)


def far_field(frame: FieldFrame, pad: int = 2) -> FieldFrame:
    """Unitary 2D Fourier transform of the frame (lens focal plane), cropped to the input size.

    The field is zero-padded ``pad`` times for finer frequency sampling; both
    planes use the same half-pixel centring, so the result lives on
    ``GridSpec(n, n * dk)`` in angular-frequency units with dk = 2 pi / (pad * extent).
    """
    n = frame.grid.n_pixels
    m = pad * n
    if pad < 1 or m & (m - 1):
        raise InvalidParameter("pad must make the padded size a power of two")
    dx = frame.grid.dx
    buf = np.zeros((m, m), dtype=complex)
    o = (m - n) // 2
    buf[o:o + n, o:o + n] = frame.values
    pre = _centred_ramp(m, 1.0)
    spec = np.fft.fft2(buf * pre[:, None] * pre[None, :])
    c = (m - 1) / 2
    post = pre * np.exp(-1j * math.pi * c * c / m * 2)  # e^{2 pi i c k / m} e^{-2 pi i c^2 / m} per axis
    spec *= post[:, None] * post[None, :]
    dk = 2 * math.pi / (m * dx)
    vals = spec[o:o + n, o:o + n] * (dx * dx / (2 * math.pi))
    return FieldFrame(GridSpec(n, n * dk), vals, frame.frame_id)


def phase_singularities(field: np.ndarray) -> np.ndarray:
    """Winding number of arg(E) around each 2x2 plaquette, shape (n-1, n-1)."""
    ph = np.angle(field)

    def wrap(d):
        return np.remainder(d + math.pi, 2 * math.pi) - math.pi

    a, b, c, d = ph[:-1, :-1], ph[:-1, 1:], ph[1:, 1:], ph[1:, :-1]
    total = wrap(b - a) + wrap(c - b) + wrap(d - c) + wrap(a - d)
    return np.rint(total / (2 * math.pi)).astype(int)


@dataclass
class FieldMaps:
    mean_intensity: np.ndarray
    phase: np.ndarray
    singularities: np.ndarray
    grid: GridSpec | None = None  # plane the maps live on

    def rms_radius(self) -> float:
        """Intensity-weighted rms distance from the axis, in the map's units."""
        x = self.grid.axis
        r2 = x[None, :] ** 2 + x[:, None] ** 2
        return float(math.sqrt(np.sum(self.mean_intensity * r2) / np.sum(self.mean_intensity)))

    def interior(self) -> np.ndarray:
        """Plaquettes inside the rms radius (the illuminated aperture interior)."""
        return interior_mask(self.grid, self.rms_radius())

    def charges(self, mask: np.ndarray | None = None) -> tuple[int, int]:
        s = self.singularities if mask is None else self.singularities[mask]
        return int(np.sum(s > 0)), int(np.sum(s < 0))


def intensity_phase_maps(frames: Sequence[FieldFrame], floor: float = 0.0, plane: str = "near") -> FieldMaps:
    """Mean intensity, first-frame phase and its singularity map.

    ``plane="far"`` maps the focal-plane field instead; a phase-only screen
    never zeroes the near-field amplitude, so vortices appear only there.
    Plaquettes whose mean intensity in the first frame is below ``floor`` times
    its peak are ignored (phase is numerically meaningless there).
    """
    if not frames:
        raise InsufficientFrames("need at least one frame")
    if plane == "far":
        frames = [far_field(f) for f in frames]
    elif plane != "near":
        raise InvalidParameter(f"unknown plane {plane!r}")
    inten = np.mean([np.abs(f.values) ** 2 for f in frames], axis=0)
    first = frames[0].values
    sing = phase_singularities(first)
    if floor > 0:
        i0 = np.abs(first) ** 2
        quad = 0.25 * (i0[:-1, :-1] + i0[:-1, 1:] + i0[1:, :-1] + i0[1:, 1:])
        sing = np.where(quad >= floor * i0.max(), sing, 0)
    return FieldMaps(inten, np.angle(first), sing, frames[0].grid)


def interior_mask(grid: GridSpec, radius: float) -> np.ndarray:
    """Plaquette-centre mask r < radius, shape (n-1, n-1)."""
    x = grid.axis
    c = 0.5 * (x[:-1] + x[1:])
    return np.hypot(c[None, :], c[:, None]) < radius


def _to_bytes(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    lo, hi = float(img.min()), float(img.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    return np.rint((img - lo) * scale).astype(np.uint8)


def write_pgm(path, img: np.ndarray) -> None:
    data = _to_bytes(img)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def singularity_overlay(maps: FieldMaps) -> np.ndarray:
    """Phase map with +1 singularities painted white and -1 painted black."""
    img = (maps.phase + math.pi) / (2 * math.pi)
    img = img[:-1, :-1].copy()
    img[maps.singularities > 0] = 1.0
    img[maps.singularities < 0] = 0.0
    return img
