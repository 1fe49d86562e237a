import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oampnr.correlators import (CorrelationMap, MapKind, arm_marginal, first_order_scan, fringe_contrast,
                                g2_classical, g2_multiphoton, g2_multiphoton_grid, g2_visibility,
                                joint_pnr_distribution, scan_interference, scan_oam_map, scan_photon_pairs,
                                visibility)
from oampnr.errors import InvalidParameter, TailToleranceExceeded
from oampnr.source import ModePairGaussian, SlitGeometry, SourceParams, mode_pair_state
from oracles import displaced_thermal, poisson_mixture_thermal_pair, random_gamma, thermal_law

PAPER = SlitGeometry.paper_double()
NBAR = 1.3


def split_thermal():
    return ModePairGaussian.from_moments(0, 0, NBAR / 2, NBAR / 2, NBAR / 2, l1=2, l2=2)


# classical g2

def test_thermal_mode_bunches():
    assert g2_classical(split_thermal()) == pytest.approx(2.0, rel=1e-15)


def test_uncorrelated_modes_do_not_bunch():
    assert g2_classical(ModePairGaussian.from_moments(0.3, 0.7j, 0.4, 0.9, 0.0)) == 1.0


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_g2_formula_against_moments(seed):
    # <|a|^2 |b|^2> / (<|a|^2> <|b|^2>) for a complex Gaussian pair by Isserlis
    mu1, mu2, s1, s2, eta = random_gamma(np.random.default_rng(seed))
    s = ModePairGaussian.from_moments(mu1, mu2, s1, s2, eta)
    n1 = 2 * s1 + abs(mu1) ** 2
    n2 = 2 * s2 + abs(mu2) ** 2
    cross = n1 * n2 + 4 * abs(eta) ** 2 + 4 * (mu1.conjugate() * mu2 * eta).real
    assert g2_classical(s) == pytest.approx(cross / (n1 * n2), rel=1e-12)


@pytest.mark.parametrize("theta", [math.pi / 6, math.pi / 4, math.pi / 3])
def test_count_moment_g2_equals_classical(random_states, theta):
    # the beam splitter rescales both arms, so the count correlation is theta independent;
    # a dimmed copy (g2 is invariant under mu -> t mu, Gamma -> t^2 Gamma) keeps the cap-25 tail negligible
    r, t = random_states[0], 0.7
    s = ModePairGaussian.from_moments(t * r.mu1, t * r.mu2, t * t * r.sigma1, t * t * r.sigma2, t * t * r.eta)
    assert g2_classical(s) == pytest.approx(g2_classical(r), rel=1e-13)
    dist = joint_pnr_distribution(s, theta, 25, 25)
    assert dist.moment_g2() == pytest.approx(g2_classical(s), rel=1e-8)


# joint photon-number distribution

def test_arm_marginal_thermal():
    p = arm_marginal(split_thermal(), math.pi / 4, 1, 12)
    assert p == pytest.approx([thermal_law(NBAR / 2, n) for n in range(13)], rel=1e-12)


def test_arm_marginal_displaced_thermal():
    s = ModePairGaussian.from_moments(0.8 - 0.3j, 0.1, 0.35, 0.6, 0.1)
    th = 0.7
    got = arm_marginal(s, th, 1, 8)
    want = displaced_thermal(2 * s.sigma1 * math.cos(th) ** 2, s.mu1 * math.cos(th), 8)
    assert got == pytest.approx(want, rel=1e-8, abs=1e-13)


def test_split_thermal_joint_law():
    dist = joint_pnr_distribution(split_thermal(), math.pi / 4, 10, 10, tail_tol=None)
    assert dist.probs == pytest.approx(poisson_mixture_thermal_pair(NBAR, math.pi / 4, 10), rel=1e-10, abs=1e-15)
    assert dist.tail_mass == pytest.approx(1 - poisson_mixture_thermal_pair(NBAR, math.pi / 4, 10).sum(), abs=1e-12)


def test_tail_tolerance_enforced():
    bright = ModePairGaussian.from_moments(2.0, 2.0, 3.0, 3.0, 1.0)
    with pytest.raises(TailToleranceExceeded):
        joint_pnr_distribution(bright, math.pi / 4, 4, 4)
    assert joint_pnr_distribution(bright, math.pi / 4, 4, 4, tail_tol=None).tail_mass > 1e-6


def test_distribution_records_state_digest(random_states):
    s = random_states[1]
    assert joint_pnr_distribution(s, 0.6, 8, 8, tail_tol=None).params_digest == s.digest()


# multiphoton g2

def test_factorized_state_is_flat():
    s = ModePairGaussian.from_moments(0.4, -0.2j, 0.3, 0.6, 0.0)
    assert g2_multiphoton_grid(s, 0.8, 6) == pytest.approx(np.ones((7, 7)), rel=1e-9)


def test_split_thermal_pair_pattern():
    th = math.pi / 4
    g = g2_multiphoton_grid(split_thermal(), th, 8)
    p = np.array([thermal_law(NBAR / 2, n) for n in range(9)])
    want = poisson_mixture_thermal_pair(NBAR, th, 8) / np.outer(p, p)
    assert g == pytest.approx(want, rel=1e-10)
    assert g[1, 7] < 1
    assert all(g[n, n] > 1 for n in range(1, 9))
    assert np.all(np.diff(np.diag(g)) > 0)


def test_pair_swap_symmetry(random_states):
    s = random_states[2]
    swapped = ModePairGaussian.from_moments(s.mu2, s.mu1, s.sigma2, s.sigma1, s.eta.conjugate())
    th = math.pi / 4
    a = g2_multiphoton_grid(s, th, 5)
    b = g2_multiphoton_grid(swapped, th, 5)
    assert np.max(np.abs(a - b.T) / a) < 1e-10


def test_exact_and_truncated_marginals_agree(random_states):
    s = random_states[0]
    exact = g2_multiphoton_grid(s, 0.6, 5)
    trunc = g2_multiphoton_grid(s, 0.6, 5, marginals="truncated")
    assert trunc == pytest.approx(exact, rel=1e-7)
    assert g2_multiphoton(s, 0.6, 2, 3, marginals="truncated") == pytest.approx(exact[2, 3], rel=1e-7)
    assert g2_multiphoton(s, 0.6, 2, 3) == pytest.approx(exact[2, 3], rel=1e-12)


def test_unknown_marginal_mode(random_states):
    with pytest.raises(InvalidParameter):
        g2_multiphoton(random_states[0], 0.6, 1, 1, marginals="guess")


def test_projection_above_cap(random_states):
    with pytest.raises(InvalidParameter):
        g2_multiphoton(random_states[0], 0.6, 5, 1, cap=4)


# scans and helpers

def test_visibility_helpers():
    assert visibility([1.0, 3.0]) == pytest.approx(0.5)
    assert g2_visibility([1.5, 2.0]) == pytest.approx(1 / 3)
    assert fringe_contrast([2.0, 2.0]) == 0.0


def test_first_order_zero_mean_at_cosine_zero():
    p = SourceParams(zeta=0.0)
    fo = first_order_scan(PAPER, p, [6], (0, 1))
    st6 = mode_pair_state(6, 6, PAPER, p)
    assert fo.values[0, 0] == pytest.approx(2 * st6.sigma1, rel=1e-14)
    assert fo.values[0, 1] == pytest.approx(thermal_law(2 * st6.sigma1 * math.cos(p.theta) ** 2, 0), rel=1e-12)


def test_scan_interference_classical_peak(paper_fit):
    m = scan_interference(paper_fit.geometry, paper_fit.source, 3, range(-15, 16))
    assert m.kind is MapKind.CLASSICAL_G2
    assert m.argmax1() == 3


def test_paper_fit_zero_mode_g2(paper_fit):
    assert g2_classical(mode_pair_state(0, 0, paper_fit.geometry, paper_fit.source)) == pytest.approx(1.74, abs=1e-9)


def test_oam_map_symmetric(paper_fit):
    m = scan_oam_map(paper_fit.geometry, paper_fit.source, range(-4, 5))
    assert m.values == pytest.approx(m.values.T, rel=1e-12)


def test_photon_pair_map_trace_order(random_states):
    m = scan_photon_pairs(random_states[1], 0.6, 3)
    keys = [(a + b, a) for a, b, _ in m.trace()]
    assert keys == sorted(keys)
    assert len(keys) == 16


def test_empty_scan_rejected():
    with pytest.raises(InvalidParameter):
        scan_interference(PAPER, SourceParams(), 3, [])


def test_map_rejects_nonfinite():
    with pytest.raises(InvalidParameter):
        CorrelationMap([0], [0], np.array([[np.nan]]), MapKind.CLASSICAL_G2)
