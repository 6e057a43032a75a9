import math

import numpy as np
import pytest

from aris_emf.beamforming import (
    BeamConstants,
    DinkelbachState,
    dinkelbach_objective,
    optimize_beamformer,
    pair_gain,
    solve_inner,
)
from aris_emf.channel import Beamformer
from aris_emf.exposure import InfeasibleError, SarModel, default_sar_model, reference_sar


def random_psd2(rng, scale=1.0):
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    return scale * (a @ a.conj().T)


def ratio_on_grid(k_mat, model, c, n=500):
    """Dense-grid minimum of c*SAR/gamma used as the exhaustive oracle."""
    a2 = np.linspace(0.0, 4.0, n)
    b2 = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    gam = pair_gain(k_mat, a2, b2[:, None])
    alpha = np.stack([np.ones((n, n)), np.broadcast_to(a2, (n, n))])
    sar = reference_sar(model, alpha, b2[:, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(gam > 0, c * sar / gam, np.inf)
    return float(ratio.min())


def beam_ratio(k_mat, model, c, bf):
    sar = reference_sar(model, np.asarray(bf.alpha), bf.beta[1])
    gam = float(pair_gain(k_mat, bf.alpha[1], bf.beta[1]))
    return c * sar / gam


def test_objective_matches_vector_quadratic_form():
    rng = np.random.default_rng(0)
    for _ in range(200):
        k = random_psd2(rng)
        a2 = rng.uniform(0, 4)
        b2 = rng.uniform(0, 2 * math.pi)
        lam = rng.uniform(0, 3)
        rbar, sigma2, w = rng.uniform(1e5, 1e6), rng.uniform(1e-13, 1e-11), 240e3
        got = dinkelbach_objective((1.0, a2), (0.0, b2), lam, k,
                                   default_sar_model(), rbar, sigma2, w, 1.0)
        f = np.array([1.0, math.sqrt(a2) * np.exp(1j * b2)])
        gamma = float((f.conj() @ k @ f).real)
        c = sigma2 * (2 ** (rbar / w) - 1)
        sar = reference_sar(default_sar_model(), (1.0, a2), b2)
        want = c * sar - lam * gamma
        assert got == pytest.approx(want, rel=1e-10, abs=1e-18)


def test_objective_trivial_cases():
    k = np.array([[2.0, 0.5 + 0.5j], [0.5 - 0.5j, 1.0]])
    model = default_sar_model()
    c = 1e-12 * (2 ** (6e5 / 240e3) - 1)
    at_zero = dinkelbach_objective((1.0, 1.5), (0.0, 0.3), 0.0, k, model,
                                   6e5, 1e-12, 240e3, 1.0)
    assert at_zero == pytest.approx(c * reference_sar(model, (1.0, 1.5), 0.3), rel=1e-12)
    assert dinkelbach_objective((1.0, 1.5), (0.0, 0.3), 0.7, k, model,
                                6e5, 1e-12, 240e3, 0.0) == 0.0
    # at the ratio update point the linearized objective vanishes
    gam = float(pair_gain(k, 1.5, 0.3))
    lam_fix = c * reference_sar(model, (1.0, 1.5), 0.3) / gam
    resid = dinkelbach_objective((1.0, 1.5), (0.0, 0.3), lam_fix, k, model,
                                 6e5, 1e-12, 240e3, 1.0)
    assert abs(resid) <= 1e-12 * max(1.0, c)


def test_pair_gain_matches_quadratic_form():
    rng = np.random.default_rng(1)
    for _ in range(100):
        k = random_psd2(rng)
        a2 = rng.uniform(0, 4)
        b2 = rng.uniform(0, 2 * math.pi)
        f = np.array([1.0, math.sqrt(a2) * np.exp(1j * b2)])
        want = float((f.conj() @ k @ f).real)
        assert float(pair_gain(k, a2, b2)) == pytest.approx(want, rel=1e-10)


def test_inner_diagonal_k_beta_free_model_matches_1d_oracle():
    # with no harmonic envelope and diagonal K the objective depends on alpha2 only
    model = SarModel(b=(4.0, 1.0, 4.0) + (0.0,) * 17)
    k = np.diag([1.0, 3.0]).astype(complex)
    cons = BeamConstants(rbar=6e5, sigma2=1e-12, bandwidth=240e3)
    lam = 0.5 * cons.power_factor
    bf = solve_inner(lam, k, model, cons)
    a_dense = np.linspace(0.0, 4.0, 10 ** 6)
    vals = cons.power_factor * (4.0 + np.sqrt(a_dense) + 4.0 * a_dense) \
        - lam * (1.0 + 3.0 * a_dense)
    a_star = float(a_dense[np.argmin(vals)])
    assert bf.alpha[1] == pytest.approx(a_star, abs=1e-3)
    got = cons.power_factor * (4.0 + math.sqrt(bf.alpha[1]) + 4.0 * bf.alpha[1]) \
        - lam * (1.0 + 3.0 * bf.alpha[1])
    assert got <= float(vals.min()) + 1e-12 * max(1.0, abs(float(vals.min())))


def test_inner_lambda_zero_minimizes_sar_vs_dense_grid():
    model = default_sar_model()
    cons = BeamConstants(rbar=6e5, sigma2=1e-12, bandwidth=240e3)
    k = np.eye(2, dtype=complex)
    bf = solve_inner(0.0, k, model, cons)
    got = cons.power_factor * reference_sar(model, np.asarray(bf.alpha), bf.beta[1])
    n = 400
    a2 = np.linspace(0.0, 4.0, n)
    b2 = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    alpha = np.stack([np.ones((n, n)), np.broadcast_to(a2, (n, n))])
    oracle = cons.power_factor * reference_sar(model, alpha, b2[:, None])
    assert got <= float(oracle.min()) + 1e-15
    assert got == pytest.approx(float(oracle.min()), rel=1e-3)


def test_inner_result_beats_verification_grid():
    rng = np.random.default_rng(2)
    model = default_sar_model()
    cons = BeamConstants(rbar=7e5, sigma2=3e-12, bandwidth=240e3)
    for _ in range(10):
        k = random_psd2(rng)
        lam = rng.uniform(0, 2) * cons.power_factor
        bf = solve_inner(lam, k, model, cons)
        got = dinkelbach_objective(bf.alpha, bf.beta, lam, k, model,
                                   cons.rbar, cons.sigma2, cons.bandwidth, 1.0)
        n = 64
        a2 = np.linspace(0.0, 4.0, n)
        b2 = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
        gam = pair_gain(k, a2, b2[:, None])
        alpha = np.stack([np.ones((n, n)), np.broadcast_to(a2, (n, n))])
        sar = reference_sar(model, alpha, b2[:, None])
        grid_vals = cons.power_factor * sar - lam * gam
        assert got <= float(grid_vals.min()) + 1e-12 * max(1.0, abs(float(grid_vals.min())))


def test_optimizer_matches_dense_grid_ratio():
    rng = np.random.default_rng(3)
    model = default_sar_model()
    for trial in range(50):
        k = random_psd2(rng)
        cons = BeamConstants(rbar=rng.uniform(2e5, 2e6), sigma2=1e-12, bandwidth=240e3)
        bf, state = optimize_beamformer(k, model, cons)
        assert state.converged
        oracle = ratio_on_grid(k, model, cons.power_factor)
        assert state.lam <= oracle * 1.005 + 1e-30
        assert beam_ratio(k, model, cons.power_factor, bf) == pytest.approx(
            state.lam, rel=1e-9)


def test_lambda_sequence_monotone_and_fixed_point():
    rng = np.random.default_rng(4)
    model = default_sar_model()
    for _ in range(20):
        k = random_psd2(rng)
        cons = BeamConstants(rbar=8e5, sigma2=2e-12, bandwidth=240e3)
        bf, state = optimize_beamformer(k, model, cons)
        hist = np.asarray(state.lam_history)
        assert np.all(np.diff(hist) <= 1e-12 * np.maximum(1.0, np.abs(hist[:-1])))
        # fixed point: the linearized objective vanishes at the output
        resid = dinkelbach_objective(bf.alpha, bf.beta, state.lam, k, model,
                                     cons.rbar, cons.sigma2, cons.bandwidth, 1.0)
        scale = cons.power_factor * reference_sar(model, np.asarray(bf.alpha), bf.beta[1])
        assert abs(resid) <= 1e-6 * max(1.0, scale)
        # never worse than the grid initialization it started from
        assert state.lam <= state.lam_history[0] + 1e-12


def test_scaled_identity_k_converges_quickly():
    model = default_sar_model()
    cons = BeamConstants(rbar=6e5, sigma2=1e-12, bandwidth=240e3)
    bf, state = optimize_beamformer(3.0 * np.eye(2, dtype=complex), model, cons)
    assert state.converged and state.iterations <= 5
    assert bf.alpha[0] == 1.0 and bf.beta[0] == 0.0


def test_gram_scaling_leaves_argmin_and_scales_ratio():
    rng = np.random.default_rng(5)
    model = default_sar_model()
    cons = BeamConstants(rbar=9e5, sigma2=1e-12, bandwidth=240e3)
    k = random_psd2(rng)
    bf1, st1 = optimize_beamformer(k, model, cons)
    bf2, st2 = optimize_beamformer(7.3 * k, model, cons)
    assert st2.lam * 7.3 == pytest.approx(st1.lam, rel=1e-6)
    assert bf2.alpha[1] == pytest.approx(bf1.alpha[1], abs=1e-3)
    assert bf2.beta[1] == pytest.approx(bf1.beta[1], abs=1e-3)


def test_zero_rate_share_gives_zero_ratio():
    model = default_sar_model()
    cons = BeamConstants(rbar=0.0, sigma2=1e-12, bandwidth=240e3)
    bf, state = optimize_beamformer(np.eye(2, dtype=complex), model, cons)
    assert state.lam == 0.0
    assert state.converged
    assert bf.alpha[0] == 1.0


def test_zero_gram_matrix_is_infeasible():
    cons = BeamConstants(rbar=6e5, sigma2=1e-12, bandwidth=240e3)
    with pytest.raises(InfeasibleError):
        optimize_beamformer(np.zeros((2, 2), dtype=complex), default_sar_model(), cons)


def test_unallocated_element_short_circuits():
    cons = BeamConstants(rbar=6e5, sigma2=1e-12, bandwidth=240e3, delta=0.0)
    bf, state = optimize_beamformer(np.eye(2, dtype=complex), default_sar_model(), cons)
    assert state.iterations == 0 and state.converged and state.lam == 0.0
    assert isinstance(bf, Beamformer)


def test_non_square_or_non_hermitian_rejected():
    cons = BeamConstants(rbar=6e5, sigma2=1e-12, bandwidth=240e3)
    with pytest.raises(ValueError, match="2x2"):
        optimize_beamformer(np.eye(3, dtype=complex), default_sar_model(), cons)
    bad = np.array([[1.0, 1.0 + 1j], [1.0 + 1j, 1.0]])
    with pytest.raises(ValueError, match="Hermitian"):
        optimize_beamformer(bad, default_sar_model(), cons)


def test_state_shape_and_beamformer_convention():
    model = default_sar_model()
    cons = BeamConstants(rbar=5e5, sigma2=1e-12, bandwidth=240e3)
    bf, state = optimize_beamformer(random_psd2(np.random.default_rng(6)), model, cons)
    assert isinstance(state, DinkelbachState)
    assert state.beamformer == bf
    assert len(state.lam_history) == state.iterations + 1
    assert bf.alpha[0] == 1.0 and bf.beta[0] == 0.0
    assert 0.0 <= bf.alpha[1] <= 4.0
    assert 0.0 <= bf.beta[1] < 2 * math.pi
