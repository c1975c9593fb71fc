from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate, special

from scatchain.single_channel import (
    ChainState1D,
    DegenerateTransferError,
    DisorderModel,
    MarginalDiscriminantError,
    SingleChannelParams,
    decay_rate_series,
    discriminant,
    eigenvalues_1d,
    fixed_points,
    gaussian_prediction,
    initial_state,
    integral_F,
    integral_F_values,
    noisy_step,
    static_orbit,
    static_step,
)
from scatchain.smatrix import compose, transport, unitarity_residual

BALLISTIC = SingleChannelParams(0.5, 0.0, 0.628319, 0.628319)
LOCALISED = SingleChannelParams(0.5, 0.0, 0.314159, 0.314159)


def _random_gens(n: int, seed: int) -> list[SingleChannelParams]:
    rng = np.random.default_rng(seed)
    return [SingleChannelParams(rng.uniform(0.05, 0.95), rng.uniform(0, 2 * np.pi),
                                rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi))
            for _ in range(n)]


def _state(a: float, chi: float, gen: SingleChannelParams) -> ChainState1D:
    # Place a chain state at (A, chi); phi differs from chi by the
    # generator's reflection phase.
    return ChainState1D(A=np.asarray(a), phi=np.asarray(chi - gen.alpha_left),
                        beta_left=0.0, beta_right=0.0,
                        log_B=0.5 * np.log1p(-a * a), n=1)


def test_params_materialize_to_unitary():
    for gen in _random_gens(20, seed=0):
        s = gen.to_smatrix()
        assert unitarity_residual(s) <= 1e-9
        assert abs(abs(s.mat[0, 0]) - gen.A) < 1e-12
        # Transmission intensity is B^2 = 1 - A^2.
        assert abs(transport(s).t_avg - (1.0 - gen.A**2)) < 1e-12


def test_initial_state_reconstructs_the_generator():
    for gen in _random_gens(10, seed=1):
        st = initial_state(gen)
        assert st.n == 1
        assert np.max(np.abs(st.to_smatrix().mat - gen.to_smatrix().mat)) < 1e-12


def test_static_step_matches_matrix_composition():
    gen = BALLISTIC
    st = initial_state(gen)
    s = gen.to_smatrix()
    for k in range(200):
        st = static_step(st, gen)
        s = compose(s, gen.to_smatrix())
        assert np.max(np.abs(st.to_smatrix().mat - s.mat)) < 1e-10 * (k + 2)


def test_noisy_step_matches_matrix_composition():
    gens = _random_gens(200, seed=2)
    st = initial_state(gens[0])
    s = gens[0].to_smatrix()
    for gen in gens[1:]:
        st = noisy_step(st, gen)
        s = compose(s, gen.to_smatrix())
    assert np.max(np.abs(st.to_smatrix().mat - s.mat)) < 1e-10 * len(gens)


def test_noisy_step_with_fixed_generator_is_the_static_map():
    gen = SingleChannelParams(0.4, 1.1, 0.7, 0.3)
    st_a = st_b = initial_state(gen)
    for _ in range(50):
        st_a = static_step(st_a, gen)
        st_b = noisy_step(st_b, gen)
        assert abs(st_a.A - st_b.A) < 1e-12
        assert abs(st_a.chi(gen) - st_b.chi(gen)) < 1e-12


def test_transparent_generator_shifts_phase_by_2_lambda():
    # With A = 0 both arg factors of the phase update drop out, leaving
    # chi_{n+1} = chi_n + 2 lambda; the amplitude is untouched.
    lam = 0.55
    gen = SingleChannelParams(0.0, 0.2, lam, lam)
    st = _state(0.4, 1.3, gen)
    nxt = static_step(st, gen)
    assert abs(nxt.A - st.A) < 1e-15
    advance = (nxt.chi(gen) - st.chi(gen)) % (2 * np.pi)
    assert abs(advance - 2 * lam) < 1e-12


def test_transmission_product_identity():
    # The accumulated log B equals the transmission of the composed
    # matrix product over a hundred disordered steps.
    rng = np.random.default_rng(3)
    gens = [SingleChannelParams(rng.uniform(0.05, 0.35), rng.uniform(0, 2 * np.pi),
                                rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi))
            for _ in range(100)]
    st = initial_state(gens[0])
    s = gens[0].to_smatrix()
    for gen in gens[1:]:
        st = noisy_step(st, gen)
        s = compose(s, gen.to_smatrix())
    assert abs(np.exp(2.0 * st.log_B) - transport(s).t_avg) < 1e-12


def test_discriminant_values():
    assert abs(discriminant(BALLISTIC) - (-0.095492)) < 1e-6
    assert abs(discriminant(LOCALISED) - 0.154508) < 1e-6
    assert discriminant(SingleChannelParams(0.0, 0.0, 0.9, 0.9)) <= 0.0


def test_eigenvalue_pairing_and_order():
    for gen in _random_gens(50, seed=4):
        k1, k2 = eigenvalues_1d(gen)
        assert abs(k1) <= abs(k2) + 1e-15
        assert abs(k1 * np.conj(k2)) == pytest.approx(1.0, abs=1e-10)
        # Both eigenvalues share the phase of the transmission asymmetry,
        # fixing the product to the transfer-matrix determinant.
        det_phase = np.exp(1j * (gen.beta_left - gen.beta_right))
        assert abs(k1 * k2 - det_phase) < 1e-10
        d = discriminant(gen)
        if d < -1e-9:
            common = np.exp(0.5j * (gen.beta_left - gen.beta_right))
            assert abs(k1 / common - np.conj(k2 / common)) < 1e-10
            assert abs(abs(k1) - 1.0) < 1e-12
        elif d > 1e-9:
            assert abs(k1) < 1.0 < abs(k2)


def test_eigenvalues_conjugate_for_symmetric_transmission():
    # In the beta_L = beta_R gauge the ballistic pair is exactly conjugate.
    rng = np.random.default_rng(40)
    for _ in range(20):
        lam = rng.uniform(0.05, np.pi - 0.05)
        a = rng.uniform(0.0, max(np.sin(lam) - 0.05, 0.01))
        gen = SingleChannelParams(a, rng.uniform(0, 2 * np.pi), lam, lam)
        if discriminant(gen) >= -1e-9:
            continue
        k1, k2 = eigenvalues_1d(gen)
        assert abs(k1 - np.conj(k2)) < 1e-10


def test_eigenvalues_degenerate_at_full_reflection():
    with pytest.raises(DegenerateTransferError):
        eigenvalues_1d(SingleChannelParams(1.0, 0.0, 0.3, 0.3))


def test_dichotomy_predicts_orbit_behavior():
    # Sign of D decides boundedness vs exponential decay in every
    # non-marginal draw; localised rates match log|kappa_1| to 1%.
    rng = np.random.default_rng(5)
    n_steps = 4000
    for _ in range(60):
        gen = SingleChannelParams(rng.uniform(0.05, 0.95), 0.0,
                                  rng.uniform(0.05, np.pi - 0.05), 0.0)
        gen = SingleChannelParams(gen.A, 0.0, gen.beta_left, gen.beta_left)
        d = discriminant(gen)
        if abs(d) < 1e-6:
            continue
        st = initial_state(gen)
        for _ in range(n_steps - 1):
            st = static_step(st, gen)
        rate = st.log_B / st.n
        if d < 0:
            assert st.A < 1.0 - 1e-6
            assert rate > -1e-2
        else:
            k1, _ = eigenvalues_1d(gen)
            assert st.A > 1.0 - 1e-6
            assert abs(rate / np.log(abs(k1)) - 1.0) < 0.01


def test_elliptic_fixed_point_is_fixed():
    fp = fixed_points(BALLISTIC)
    assert fp.kind == "elliptic"
    assert abs(fp.A - 0.557536) < 1e-6
    assert not -np.pi / 2 < fp.chi < np.pi / 2
    assert abs(abs(fp.multiplier) - 1.0) < 1e-12
    st = _state(fp.A, fp.chi, BALLISTIC)
    nxt = static_step(st, BALLISTIC)
    assert abs(nxt.A - fp.A) < 1e-12
    assert abs((nxt.chi(BALLISTIC) - fp.chi + np.pi) % (2 * np.pi) - np.pi) < 1e-12


def test_attractor_absorbs_localised_orbits():
    fp = fixed_points(LOCALISED)
    assert fp.kind == "attractor"
    assert fp.A == 1.0
    assert abs(fp.multiplier) < 1.0
    st = _state(0.3, 2.0, LOCALISED)
    for _ in range(2000):
        st = static_step(st, LOCALISED)
    assert 1.0 - st.A < 1e-6
    dchi = (st.chi(LOCALISED) - fp.chi + np.pi) % (2 * np.pi) - np.pi
    assert abs(dchi) < 1e-6


def test_attractor_contraction_rate_is_kappa_1():
    # B_n decays like |kappa_1|^n near the attractor.
    k1, _ = eigenvalues_1d(LOCALISED)
    st = _state(0.3, 2.0, LOCALISED)
    logb = []
    for _ in range(400):
        st = static_step(st, LOCALISED)
        logb.append(float(st.log_B))
    fit = np.polyfit(np.arange(200, 400), logb[200:], 1)[0]
    assert abs(fit / np.log(abs(k1)) - 1.0) < 0.01


def test_marginal_discriminant_raises():
    lam = 0.4
    gen = SingleChannelParams(np.sin(lam), 0.0, lam, lam)
    assert abs(discriminant(gen)) < 1e-12
    with pytest.raises(MarginalDiscriminantError):
        fixed_points(gen)


def test_integral_of_motion_is_conserved():
    a, chi = np.array([0.3]), np.array([1.0])
    a_traj, c_traj = static_orbit(BALLISTIC, a, chi, 10000)
    f = integral_F_values(a_traj, c_traj, BALLISTIC)
    assert np.max(np.abs(f - f[0])) < 1e-10


def test_integral_of_motion_levels_label_orbits():
    # A point iterated far along the orbit sits on the same level set.
    a, chi = np.array([0.25]), np.array([0.7])
    a_traj, c_traj = static_orbit(BALLISTIC, a, chi, 500)
    f_start = integral_F_values(a_traj[:1], c_traj[:1], BALLISTIC)
    f_later = integral_F_values(a_traj[500:], c_traj[500:], BALLISTIC)
    assert abs(f_start[0] - f_later[0]) < 1e-10


def test_integral_F_trivial_value_and_pole():
    gen = BALLISTIC
    st = _state(0.0, 1.234, gen)
    assert abs(integral_F(st, gen) - np.sin(0.628319)) < 1e-12
    with pytest.raises(ZeroDivisionError):
        integral_F_values(np.array([1.0]), np.array([0.5]), gen)


def test_weak_disorder_keeps_orbits_on_the_level_set():
    # eps = 0.001 jitter around the ballistic generator: no localisation,
    # the orbit stays in a narrow band around the unperturbed F level.
    model = DisorderModel.from_json({
        "A": {"dist": "uniform", "lo": 0.499, "hi": 0.501},
        "lambda": {"dist": "uniform", "lo": 0.627319, "hi": 0.629319},
        "alpha_L": {"dist": "const", "value": 0.0},
        "seed": 6,
    })
    rng = model.chain_stream(0)
    a, _, lam, alpha = model.sample_params(rng, 10000)
    st = initial_state(SingleChannelParams(a[0], alpha[0], lam[0], lam[0]))
    ref = SingleChannelParams(0.5, 0.0, 0.628319, 0.628319)
    f0 = integral_F(st, ref)
    worst = 0.0
    for k in range(1, 10000):
        st = noisy_step(st, SingleChannelParams(a[k], alpha[k], lam[k], lam[k]))
        worst = max(worst, abs(integral_F(st, ref) - f0))
    assert st.A < 1.0 - 1e-3
    assert worst < 0.1


def _uniform_phase_model(seed: int) -> DisorderModel:
    return DisorderModel.from_json({
        "B": {"dist": "uniform", "lo": 0.0, "hi": 1.0},
        "lambda": {"dist": "const", "value": np.pi / 10},
        "alpha_L": {"dist": "uniform", "lo": 0.0, "hi": 2 * np.pi},
        "seed": seed,
    })


def test_decay_series_full_and_approx_agree():
    model = _uniform_phase_model(7)
    full = decay_rate_series(model, 100, 2000, mode="full").moment_summary()
    approx = decay_rate_series(model, 100, 2000, mode="approx").moment_summary()
    assert abs(full.mean - approx.mean) < 0.01
    assert abs(full.variance / approx.variance - 1.0) < 0.05


def test_decay_series_warns_for_short_chains():
    model = _uniform_phase_model(8)
    with pytest.warns(UserWarning):
        decay_rate_series(model, 30, 50)


def test_decay_series_flags_zero_transmission():
    model = DisorderModel.from_json({
        "B": {"dist": "const", "value": 0.0},
        "lambda": {"dist": "const", "value": 0.3},
        "alpha_L": {"dist": "const", "value": 0.0},
        "seed": 9,
    })
    stats = decay_rate_series(model, 100, 50)
    assert stats.n_nonfinite == 50


def test_gaussian_prediction_uniform_phase_oracle():
    # Uniform reflection phase decouples the chain: the mean is the
    # plain log B average (= -1) and the variance follows from a
    # dilogarithm quadrature.
    val, quad_err = integrate.quad(lambda b: special.spence(b * b), 0.0, 1.0)
    sigma2 = 1.0 + 0.5 * val
    assert quad_err < 1e-8
    pred = gaussian_prediction(_uniform_phase_model(10), samples=200000)
    assert pred.converged
    assert abs(pred.mean - (-1.0)) < 0.01
    assert abs(pred.variance - sigma2) < 0.01 * sigma2
    dist = pred.distribution(100)
    assert dist.std() == pytest.approx(np.sqrt(pred.variance / 100.0))


def test_disorder_model_rejects_bad_spec():
    with pytest.raises(ValueError):
        DisorderModel.from_json({"A": {"dist": "poisson", "lo": 0, "hi": 1},
                                 "lambda": {"dist": "const", "value": 0.3},
                                 "alpha_L": {"dist": "const", "value": 0.0},
                                 "seed": 0})


def test_disorder_model_streams_are_reproducible():
    model = _uniform_phase_model(11)
    a1 = model.sample_params(model.chain_stream(3), 16)
    a2 = model.sample_params(model.chain_stream(3), 16)
    b = model.sample_params(model.chain_stream(4), 16)
    for x, y in zip(a1, a2):
        assert np.array_equal(x, y)
    assert not np.array_equal(a1[0], b[0])


@pytest.mark.xfail(strict=True, reason="finite-length decay rates at n = 100 "
                   "keep a visible negative skew; the Gaussian-limit "
                   "zero-skewness bound fails at ensemble 1e4")
def test_decay_rate_skewness_vanishes_at_n100():
    stats = decay_rate_series(_uniform_phase_model(12), 100, 10000)
    mom = stats.moment_summary()
    assert abs(mom.skewness) <= 3.0 * mom.skewness_se
