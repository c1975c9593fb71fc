"""Tests for spectral classification and chain evolution at arbitrary width."""

import numpy as np
import pytest
from scipy.stats import unitary_group

from scatchain.haar import haar_sample, sample_with_label
from scatchain.multi_channel import (
    ChainTrace,
    beta_exponent,
    classify,
    du_from_spectra,
    eigenvector_structure,
    evolve_chain,
    plateau_transmission,
    transfer_spectra_batch,
)
from scatchain.single_channel import SingleChannelParams, eigenvalues_1d
from scatchain.smatrix import (
    ScatteringMatrix,
    SingularBlockError,
    TransferMatrix,
    compose,
    k_matrix,
    perfect_transmitter,
    s_to_t,
    t_to_s,
    transport,
)

BALLISTIC_1CH = SingleChannelParams(0.5, 0.0, 0.628319, 0.628319)
LOCALISED_1CH = SingleChannelParams(0.6, -0.2, 0.2, 0.2)


def _direct_sum(mats):
    """Assemble uncoupled single-channel cells into one d-channel scatterer."""
    d = len(mats)
    out = np.zeros((2 * d, 2 * d), dtype=complex)
    for i, cell in enumerate(mats):
        out[i, i] = cell[0, 0]
        out[i, i + d] = cell[0, 1]
        out[i + d, i] = cell[1, 0]
        out[i + d, i + d] = cell[1, 1]
    return ScatteringMatrix(out)


def _sorted_multiset(values):
    z = np.asarray(values)
    return z[np.lexsort((np.round(z.imag, 9), np.round(z.real, 9)))]


def test_classify_perfect_transmitter_is_ballistic():
    c = classify(perfect_transmitter(4))
    assert c.label == "ballistic"
    assert c.d_u == 0
    assert c.decay_rate == 0.0
    assert np.allclose(np.abs(c.spectrum), 1.0, atol=1e-12)
    assert c.degenerate


def test_classify_single_channel_embedding():
    # A > sin(lam): both transfer eigenvalues leave the unit circle.
    c = classify(LOCALISED_1CH.to_smatrix())
    assert c.label == "totally_localised"
    assert c.d_u == 1
    _, kappa_2 = eigenvalues_1d(LOCALISED_1CH)
    assert abs(c.decay_rate - np.log(abs(kappa_2))) < 1e-10


def test_classify_direct_sum_is_spectrum_union():
    s = _direct_sum([BALLISTIC_1CH.to_smatrix().mat, LOCALISED_1CH.to_smatrix().mat])
    c = classify(s)
    expected = np.array(list(eigenvalues_1d(BALLISTIC_1CH)) + list(eigenvalues_1d(LOCALISED_1CH)))
    assert np.max(np.abs(_sorted_multiset(c.spectrum) - _sorted_multiset(expected))) < 1e-9
    assert c.label == "partially_localised"
    assert c.d_u == 1


def test_spectrum_pairing_haar():
    for seed in (3, 19, 101):
        rng = np.random.default_rng(seed)
        c = classify(ScatteringMatrix(haar_sample(rng, 3, 1)[0]))
        mods = np.abs(c.spectrum)  # sorted by decreasing modulus
        products = mods * mods[::-1]
        assert np.max(np.abs(products - 1.0)) < 1e-9


def test_spectrum_of_chain_is_generator_spectrum_powered():
    rng = np.random.default_rng(77)
    t = s_to_t(ScatteringMatrix(haar_sample(rng, 3, 1)[0]))
    mods = np.sort(np.abs(np.linalg.eigvals(t.mat)))
    power = t.mat
    for n in (2, 3):
        power = power @ t.mat
        got = np.sort(np.abs(np.linalg.eigvals(power)))
        assert np.max(np.abs(got / mods**n - 1.0)) < 1e-8


def test_classification_invariant_under_channel_rotation():
    rng = np.random.default_rng(5)
    s = ScatteringMatrix(haar_sample(rng, 3, 1)[0])
    v = unitary_group.rvs(3, random_state=rng)
    u = np.zeros((6, 6), dtype=complex)
    u[:3, :3] = v
    u[3:, 3:] = v
    rotated = ScatteringMatrix(u @ s.mat @ u.conj().T)
    c0, c1 = classify(s), classify(rotated)
    assert c1.label == c0.label
    assert c1.d_u == c0.d_u
    assert np.max(np.abs(np.sort(np.abs(c1.spectrum)) - np.sort(np.abs(c0.spectrum)))) < 1e-9


def test_off_circle_modes_are_flux_isotropic():
    s = sample_with_label(2, "partially_localised", seed=55)
    st = eigenvector_structure(s)
    mods = np.abs(st.spectrum)
    for i in range(2 * st.d):
        alpha = st.alphas[:, i]
        beta = st.betas[:, i]
        if abs(mods[i] - 1.0) > 1e-8:
            assert abs(st.knorm[i]) < 1e-9
            assert abs(np.linalg.norm(alpha) ** 2 - np.linalg.norm(beta) ** 2) < 1e-9
        else:
            assert abs(st.knorm[i]) > 1e-6
    # Independent check on the dominant mode straight from the raw eigenproblem.
    t = s_to_t(s)
    vals, vecs = np.linalg.eig(t.mat)
    top = int(np.argmax(np.abs(vals)))
    v = vecs[:, top]
    assert abs(v.conj() @ k_matrix(st.d) @ v) < 1e-9


def test_ballistic_modes_all_carry_flux():
    s = _direct_sum([
        SingleChannelParams(0.3, 0.1, 0.7, 0.7).to_smatrix().mat,
        SingleChannelParams(0.2, -0.4, 0.9, 0.9).to_smatrix().mat,
    ])
    st = eigenvector_structure(s)
    assert st.label == "ballistic"
    assert np.min(np.abs(st.knorm)) > 0.1


def test_plateau_oscillation_stays_in_band():
    s = sample_with_label(3, "partially_localised", seed=101)
    trace = evolve_chain(s, 600)
    lo, hi = trace.plateau_band
    assert lo < trace.plateau < hi
    for n in range(590, 600):
        assert lo <= plateau_transmission(s, n) <= hi


def test_plateau_magnitude_tracks_open_channel_fraction():
    # Order-of-magnitude heuristic: the plateau is carried by the channels
    # whose transfer eigenvalues stay on the unit circle.
    for k in range(20):
        s = sample_with_label(4, "partially_localised", seed=200 + k)
        open_fraction = (4 - classify(s).d_u) / 4
        ratio = plateau_transmission(s, 500) / open_fraction
        assert 0.1 < ratio < 10.0


def test_beta_exponent_cases():
    uncoupled = _direct_sum([
        SingleChannelParams(0.3, 0.1, 0.7, 0.7).to_smatrix().mat,
        LOCALISED_1CH.to_smatrix().mat,
    ])
    assert beta_exponent(uncoupled) == 2
    mixed = sample_with_label(3, "partially_localised", seed=101)
    assert beta_exponent(mixed) == 1


def test_evolve_ballistic_chain_stays_transmitting():
    trace = evolve_chain(BALLISTIC_1CH.to_smatrix(), 100000, record_every=100)
    assert trace.t_avg.min() > 0.2
    assert trace.residual.max() < 1e-10
    assert trace.classification.label == "ballistic"
    assert trace.decay_rate_fit is None


def test_evolve_totally_localised_rate_matches_spectrum():
    s = sample_with_label(2, "totally_localised", seed=42)
    trace = evolve_chain(s, 300)
    mods = np.abs(classify(s).spectrum)
    slowest_expanding = mods[classify(s).d_u - 1]
    expected = trace.beta * np.log(slowest_expanding)
    assert trace.beta == 2
    assert abs(trace.decay_rate_fit / expected - 1.0) < 0.02
    assert abs(trace.plateau) < 1e-6


def test_evolve_perfect_transmitter_is_lossless():
    trace = evolve_chain(perfect_transmitter(3), 50)
    assert np.max(np.abs(trace.t_avg - 1.0)) < 1e-12


def test_trace_transport_shares_are_physical():
    trace = evolve_chain(sample_with_label(3, "partially_localised", seed=101), 200)
    assert isinstance(trace, ChainTrace)
    assert np.all(trace.t_avg >= -1e-12)
    assert np.all(trace.t_avg <= 1.0 + 1e-12)
    assert np.max(np.abs(trace.t_avg + trace.r_avg - 1.0)) < 1e-9


def test_transfer_and_scattering_formalisms_agree():
    # Weak scatterer: transfer products stay well conditioned up to n = 10.
    cells = [
        SingleChannelParams(0.12, 0.3, 0.05, 0.05).to_smatrix().mat,
        SingleChannelParams(0.10, -0.8, 0.4, 0.4).to_smatrix().mat,
        SingleChannelParams(0.15, 1.1, 0.02, 0.02).to_smatrix().mat,
    ]
    rng = np.random.default_rng(3)
    u = np.zeros((6, 6), dtype=complex)
    u[:3, :3] = unitary_group.rvs(3, random_state=rng)
    u[3:, 3:] = unitary_group.rvs(3, random_state=rng)
    gen = ScatteringMatrix(u @ _direct_sum(cells).mat @ u.conj().T)
    t = s_to_t(gen)
    chain = gen
    power = t.mat.copy()
    for _ in range(2, 11):
        chain = compose(chain, gen)
        power = power @ t.mat
        via_transfer = transport(t_to_s(TransferMatrix(power))).t_avg
        assert abs(transport(chain).t_avg - via_transfer) < 1e-8


def test_batch_spectra_match_classify():
    rng = np.random.default_rng(13)
    mats = haar_sample(rng, 3, 5)
    spectra, ok = transfer_spectra_batch(mats)
    d_u, max_mod, marginal = du_from_spectra(spectra)
    assert np.all(ok)
    assert not np.any(marginal)
    assert np.allclose(max_mod, np.max(np.abs(spectra), axis=1))
    for k in range(5):
        c = classify(ScatteringMatrix(mats[k]))
        assert d_u[k] == c.d_u
        assert np.max(np.abs(np.sort(np.abs(spectra[k])) - np.sort(np.abs(c.spectrum)))) < 1e-9


def test_classify_perfect_reflector_raises():
    with pytest.raises(SingularBlockError):
        classify(ScatteringMatrix(np.eye(4, dtype=complex)))
