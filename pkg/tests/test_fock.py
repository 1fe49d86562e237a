import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oampnr.correlators import arm_marginal
from oampnr.errors import DegenerateCovariance, OrderCapExceeded, PhotonCapExceeded
from oampnr.fock import FockEvaluator, abstracted_vars, f_moment, fock_matrix_element, single_mode_moment
from oampnr.source import ModePairGaussian, mode_pair_state
from oracles import QuadratureOracle, poisson_mixture_thermal_pair, random_gamma, thermal_law

THETA = 0.6


@pytest.fixture(scope="module")
def oracles(random_states):
    return [QuadratureOracle(s.gamma, s.mean_vector, THETA) for s in random_states]


# elements against direct quadrature of the P-function

@pytest.mark.parametrize("which", range(3))
def test_elements_match_quadrature(random_states, oracles, which):
    ev = FockEvaluator(random_states[which], THETA, 5)
    q = oracles[which]
    for idx in itertools.product(range(4), repeat=4):
        assert ev.element(*idx) == pytest.approx(q.element(*idx), rel=1e-6)


@pytest.mark.parametrize("which", range(3))
@pytest.mark.parametrize("idx", [(0, 0, 0, 0), (2, 0, 0, 0), (1, 1, 0, 0), (0, 0, 1, 2), (1, 0, 1, 0), (3, 1, 2, 2)])
def test_f_moment_matches_quadrature(random_states, oracles, which, idx):
    v = abstracted_vars(random_states[which], THETA)
    assert f_moment(v, *idx) == pytest.approx(oracles[which].moment(*idx), rel=1e-8, abs=1e-14)


def test_odd_moments_vanish_for_centred_state():
    v = abstracted_vars(ModePairGaussian.from_moments(0, 0, 0.4, 0.7, 0.1 + 0.05j), THETA)
    for idx in ((1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 0, 1), (2, 1, 0, 0)):
        assert abs(f_moment(v, *idx)) < 1e-15


def test_order_cap():
    v = abstracted_vars(ModePairGaussian.from_moments(0, 0, 0.4, 0.7, 0.1), THETA)
    with pytest.raises(OrderCapExceeded):
        f_moment(v, 50, 50, 50, 50)


# structural identities

@given(seed=st.integers(0, 2**32 - 1), theta=st.floats(0.1, 1.4))
@settings(max_examples=25, deadline=None)
def test_hermiticity_and_real_diagonal(seed, theta):
    s = ModePairGaussian.from_moments(*random_gamma(np.random.default_rng(seed)))
    ev = FockEvaluator(s, theta, 4)
    for N, M, K, L in itertools.product(range(3), repeat=4):
        a = ev.element(N, M, K, L)
        b = ev.element(K, L, N, M)
        assert a == pytest.approx(b.conjugate(), rel=1e-9, abs=1e-15)
    for N, M in itertools.product(range(4), repeat=2):
        p = ev.element(N, M, N, M)
        assert abs(p.imag) <= 1e-12 * abs(p) + 1e-300
        assert p.real > 0


@pytest.mark.parametrize("nbar", [0.3, 1.0, 3.0])
def test_thermal_arm_law(nbar):
    # theta = 0 sends everything to arm 1
    s = ModePairGaussian.from_moments(0, 0, nbar / 2, 0.5, 0.1)
    ev = FockEvaluator(s, 0.0, 15)
    for n in range(16):
        assert ev.element(n, 0, n, 0).real == pytest.approx(thermal_law(nbar, n), rel=1e-9)


def test_theta_zero_leaves_arm_two_empty(random_states):
    ev = FockEvaluator(random_states[0], 0.0, 6)
    for n in range(7):
        for m in range(1, 7):
            assert ev.element(n, m, n, m) == 0


def test_factorized_state_is_product(random_states):
    r = random_states[1]
    s = ModePairGaussian.from_moments(r.mu1, r.mu2, r.sigma1, r.sigma2, 0.0)
    ev = FockEvaluator(s, THETA, 6)
    p1 = arm_marginal(s, THETA, 1, 6)
    p2 = arm_marginal(s, THETA, 2, 6)
    for n, m in itertools.product(range(7), repeat=2):
        assert ev.element(n, m, n, m).real == pytest.approx(p1[n] * p2[m], rel=1e-9)


def test_weakly_correlated_state_approaches_product():
    base = dict(mu1=0.4, mu2=-0.3j, sigma1=0.6, sigma2=0.5)
    ev = FockEvaluator(ModePairGaussian.from_moments(*base.values(), 1e-7), THETA, 4)
    ref = FockEvaluator(ModePairGaussian.from_moments(*base.values(), 0.0), THETA, 4)
    for n, m in itertools.product(range(4), repeat=2):
        assert ev.element(n, m, n, m).real == pytest.approx(ref.element(n, m, n, m).real, rel=1e-5)


def test_split_thermal_pair_matches_poisson_mixture():
    # one thermal mode on a beam splitter: alpha = beta, both arms see the same intensity
    nbar, theta = 1.3, math.pi / 4
    s = ModePairGaussian.from_moments(0, 0, nbar / 2, nbar / 2, nbar / 2 * (1 - 1e-9))
    ev = FockEvaluator(s, theta, 8, precision="extended")
    want = poisson_mixture_thermal_pair(nbar, theta, 8)
    for n, m in itertools.product(range(9), repeat=2):
        assert ev.element(n, m, n, m).real == pytest.approx(want[n, m], rel=1e-6, abs=1e-12)


def test_single_mode_path_matches_split_thermal_pair():
    nbar, theta = 1.3, math.pi / 4
    s = ModePairGaussian.from_moments(0, 0, nbar / 2, nbar / 2, nbar / 2, l1=2, l2=2)
    ev = FockEvaluator(s, theta, 8)
    assert ev.mode == "single"
    want = poisson_mixture_thermal_pair(nbar, theta, 8)
    for n, m in itertools.product(range(9), repeat=2):
        assert ev.element(n, m, n, m).real == pytest.approx(want[n, m], rel=1e-10, abs=1e-15)


def test_single_mode_moment_thermal():
    for n in range(8):
        assert single_mode_moment(n, n, 0, 0.7).real / math.factorial(n) == pytest.approx(thermal_law(1.4, n),
                                                                                          rel=1e-12)


def test_first_moment_identity(random_states):
    # the arm means follow from the beam splitter; the joint law's marginals reproduce the arm laws
    s = random_states[2]
    c2, s2 = math.cos(THETA) ** 2, math.sin(THETA) ** 2
    p1 = arm_marginal(s, THETA, 1, 60)
    p2 = arm_marginal(s, THETA, 2, 60)
    assert np.arange(61) @ p1 == pytest.approx(c2 * (2 * s.sigma1 + abs(s.mu1) ** 2), rel=1e-10)
    assert np.arange(61) @ p2 == pytest.approx(s2 * (2 * s.sigma2 + abs(s.mu2) ** 2), rel=1e-10)
    probs = FockEvaluator(s, THETA, 25).joint_probabilities(25, 25)
    # the only gap is the mass beyond the cap on the other arm
    for got, want, other in ((probs.sum(axis=1), p1, p2), (probs.sum(axis=0), p2, p1)):
        gap = want[:26] - got
        assert gap.min() > -1e-13
        assert gap.sum() <= other[26:].sum() + 1e-13


def test_paper_fit_normalisation(paper_fit):
    # the joint tail beyond the caps is bracketed by the exact single-arm tails
    s = mode_pair_state(0, 1, paper_fit.geometry, paper_fit.source)
    th = paper_fit.source.theta
    probs = FockEvaluator(s, th, 20).joint_probabilities(20, 20)
    missing = 1.0 - math.fsum(probs.ravel().tolist())
    t1 = 1.0 - arm_marginal(s, th, 1, 20).sum()
    t2 = 1.0 - arm_marginal(s, th, 2, 20).sum()
    assert max(t1, t2) - 1e-9 <= missing <= t1 + t2 + 1e-9
    assert missing < 1e-6


# numerics

def test_double_and_extended_agree(random_states):
    s = random_states[0]
    d = FockEvaluator(s, THETA, 12, precision="double")
    e = FockEvaluator(s, THETA, 12, precision="extended")
    for n, m in itertools.product(range(13), repeat=2):
        assert d.element(n, m, n, m) == pytest.approx(e.element(n, m, n, m), rel=1e-9)


def test_memo_is_transparent(random_states):
    s = random_states[1]
    a = FockEvaluator(s, THETA, 8, memo=True).joint_probabilities(8, 8)
    b = FockEvaluator(s, THETA, 8, memo=False).joint_probabilities(8, 8)
    assert np.array_equal(a, b)


def test_high_photon_numbers_use_extended_precision(random_states):
    ev = FockEvaluator(random_states[0], THETA, 30)
    assert ev.precision == "extended"
    assert ev.element(30, 0, 30, 0).real >= 0


@pytest.mark.parametrize("kw", [dict(photon_cap=61), dict(photon_cap=26, precision="double")])
def test_cap_rejected(random_states, kw):
    with pytest.raises(PhotonCapExceeded):
        FockEvaluator(random_states[0], THETA, **kw)


def test_element_beyond_cap(random_states):
    with pytest.raises(PhotonCapExceeded):
        FockEvaluator(random_states[0], THETA, 4).element(5, 0, 5, 0)


def test_module_function_matches_evaluator(random_states):
    s = random_states[2]
    assert fock_matrix_element(s, THETA, 2, 1, 0, 3) == FockEvaluator(s, THETA, 25).element(2, 1, 0, 3)


# abstracted variables

def test_symmetric_frame():
    v = abstracted_vars(ModePairGaussian.from_moments(0.2, 0.2, 0.5, 0.5, 0.3), math.pi / 4)
    assert v.x1 == pytest.approx(v.x2, rel=1e-14)
    assert v.y2 == 0.0


@pytest.mark.parametrize("l2", [-3, 0, 4, 6])
def test_paper_fit_frame_is_well_posed(paper_fit, l2):
    v = abstracted_vars(mode_pair_state(3, l2, paper_fit.geometry, paper_fit.source), paper_fit.source.theta)
    assert v.z0 > 0 and v.z1 > 0 and v.z2 > 0


def test_single_mode_has_no_two_mode_frame(paper_fit):
    with pytest.raises(DegenerateCovariance):
        abstracted_vars(mode_pair_state(3, 3, paper_fit.geometry, paper_fit.source), paper_fit.source.theta)
