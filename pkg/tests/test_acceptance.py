"""Acceptance suite: the ten headline behaviors at their stated tolerances.

Each criterion is one test (plus separately marked expected failures where a
documented target is not met); the verbose pytest line is its pass/fail record.
"""

import json
from pathlib import Path

import numpy as np
import pytest
from scipy import stats as sps

from scatchain.cli import main
from scatchain.haar import haar_sample, sample_with_label, scaling_collapse, tail_exponent
from scatchain.multi_channel import classify, evolve_chain
from scatchain.single_channel import (
    ChainState1D,
    DisorderModel,
    SingleChannelParams,
    decay_rate_series,
    eigenvalues_1d,
    fixed_points,
    gaussian_prediction,
    initial_state,
    integral_F_values,
    static_orbit,
    static_step,
)
from scatchain.smatrix import ScatteringMatrix, compose, s_to_t, t_to_s

FIG3A = SingleChannelParams(0.5, 0.0, 0.628319, 0.628319)
SIGMA2_UNIFORM_PHASE = 1.4674011  # 1 + (1/2) * int_0^1 Li2(b^2) db by quadrature
KS_CRIT_1PCT = 1.63  # asymptotic Kolmogorov-Smirnov critical factor at alpha = 0.01

UNIFORM_PHASE_MODEL = {
    "B": {"dist": "uniform", "lo": 0.0, "hi": 1.0},
    "lambda": {"dist": "const", "value": np.pi / 10},
    "alpha_L": {"dist": "uniform", "lo": 0.0, "hi": 2 * np.pi},
    "seed": 5,
}
NARROW_PHASE_MODEL = {
    "B": {"dist": "uniform", "lo": 0.0, "hi": 1.0},
    "lambda": {"dist": "const", "value": 0.1},
    "alpha_L": {"dist": "uniform", "lo": 0.5, "hi": 0.7},
    "seed": 5,
}


def _random_single_channel(rng, size):
    return SingleChannelParams(
        A=rng.uniform(0.02, 0.98, size),
        alpha_left=rng.uniform(0.0, 2 * np.pi, size),
        beta_left=rng.uniform(0.0, 2 * np.pi, size),
        beta_right=rng.uniform(0.0, 2 * np.pi, size),
    )


def _scalar_gen(gens, i):
    return SingleChannelParams(
        float(np.asarray(gens.A)[i]),
        float(np.asarray(gens.alpha_left)[i]),
        float(np.asarray(gens.beta_left)[i]),
        float(np.asarray(gens.beta_right)[i]),
    )


def test_criterion_01_conversion_algebra():
    worst_hom, worst_rt = 0.0, 0.0
    for d in (1, 2, 4):
        rng = np.random.default_rng(100 + d)
        batch = haar_sample(rng, d, 2000)
        for k in range(1000):
            s1 = ScatteringMatrix(batch[2 * k])
            s2 = ScatteringMatrix(batch[2 * k + 1])
            t1, t2 = s_to_t(s1), s_to_t(s2)
            worst_hom = max(
                worst_hom, np.max(np.abs(s_to_t(compose(s1, s2)).mat - t2.mat @ t1.mat)))
            worst_rt = max(worst_rt, np.max(np.abs(t_to_s(t1).mat - s1.mat)))
    assert worst_hom < 1e-10
    assert worst_rt < 1e-10


def test_criterion_02_manifold_stability():
    for d in (1, 4):
        gen = ScatteringMatrix(haar_sample(np.random.default_rng(40 + d), d, 1)[0])
        trace = evolve_chain(gen, 10000, record_every=10, project=False)
        assert trace.residual.max() <= 1e-10


def test_criterion_03_dichotomy_rates_and_fixed_points():
    rng = np.random.default_rng(2026)
    gens = _random_single_channel(rng, 1000)
    disc = np.asarray(gens.A) ** 2 - np.sin(np.asarray(gens.lam)) ** 2
    keep = np.abs(disc) > 1e-3  # marginal band excluded

    state = initial_state(gens)
    mid = None
    for k in range(10000):
        state = static_step(state, gens)
        if k + 1 == 2000:
            mid = np.array(state.log_B)
    final = np.asarray(state.log_B)

    decayed = final < -10.0
    assert np.array_equal(decayed[keep], disc[keep] > 0.0)

    for i in np.nonzero(keep & (disc > 0.0))[0]:
        kappa_1, _ = eigenvalues_1d(_scalar_gen(gens, i))
        rate_hat = (final[i] - mid[i]) / 8000.0
        assert abs(rate_hat / np.log(abs(kappa_1)) - 1.0) < 0.01

    for i in np.nonzero(keep & (disc < 0.0))[0]:
        gen = _scalar_gen(gens, i)
        report = fixed_points(gen)
        assert report.kind == "elliptic"
        at_fp = ChainState1D(A=report.A, phi=report.chi - gen.alpha_left,
                             beta_left=gen.beta_left, beta_right=gen.beta_right,
                             log_B=0.5 * np.log1p(-report.A ** 2), n=1)
        stepped = static_step(at_fp, gen)
        assert abs(stepped.A - report.A) < 1e-12
        assert abs(np.angle(np.exp(1j * (stepped.chi(gen) - report.chi)))) < 1e-12


def test_criterion_04_integral_of_motion():
    a0 = np.repeat(np.arange(0.1, 0.75, 0.1), 2)
    chi0 = np.tile([0.0, np.pi], 7)
    a_traj, c_traj = static_orbit(FIG3A, a0, chi0, 10000)
    f_vals = integral_F_values(a_traj, c_traj, FIG3A)
    assert np.max(np.abs(f_vals - f_vals[0])) < 1e-10


def test_criterion_05a_uniform_phase_histogram():
    model = DisorderModel.from_json(UNIFORM_PHASE_MODEL)
    rates = np.asarray(decay_rate_series(model, 100, 10000).samples)
    assert abs(rates.mean() + 1.0) < 0.02
    assert abs(100 * rates.var(ddof=1) / SIGMA2_UNIFORM_PHASE - 1.0) < 0.10
    gaussian = sps.norm(loc=-1.0, scale=np.sqrt(SIGMA2_UNIFORM_PHASE / 100))
    assert sps.kstest(rates, gaussian.cdf).statistic < KS_CRIT_1PCT / np.sqrt(rates.size)


def test_criterion_05b_narrow_phase_moments():
    model = DisorderModel.from_json(NARROW_PHASE_MODEL)
    rates = np.asarray(decay_rate_series(model, 100, 10000).samples)
    assert abs(rates.mean() + 1.56325) < 0.03
    assert abs(100 * rates.var(ddof=1) / 1.19556 - 1.0) < 0.10


@pytest.mark.xfail(
    strict=True,
    reason="the narrow phase window leaves n = 100 rates autocorrelated enough "
    "that the KS distance (~0.031 across seeds) exceeds the 1% critical value",
)
def test_criterion_05b_narrow_phase_ks():
    model = DisorderModel.from_json(NARROW_PHASE_MODEL)
    rates = np.asarray(decay_rate_series(model, 100, 10000).samples)
    prediction = gaussian_prediction(model, samples=1000000)
    ks = sps.kstest(rates, prediction.distribution(100).cdf).statistic
    assert ks < KS_CRIT_1PCT / np.sqrt(rates.size)


def test_criterion_06_single_channel_measure(ballistic_measures):
    estimate = ballistic_measures[0]
    assert estimate.d == 1 and estimate.n_samples == 100000
    assert abs(estimate.estimate - 0.5) < 0.005


def test_criterion_07_measure_scaling_rates(ballistic_fit, totloc_fit):
    assert abs(ballistic_fit.rate / 0.4658 - 1.0) < 0.10
    assert abs(totloc_fit.rate / 1.034 - 1.0) < 0.10


def test_criterion_08_tails_amplitude_median(pmax_stats):
    for d in (2, 4, 8):
        scale = np.sqrt(d / 2.0)
        exponent, _ = tail_exponent(pmax_stats[d], window=(4.0 * scale, 14.0 * scale))
        assert abs(exponent + 3.0) < 0.3
    report = scaling_collapse([(d, pmax_stats[d]) for d in (2, 4, 8)])
    assert abs(report.tail_amplitude - 4.0) < 0.3
    medians = [np.median(np.log(np.asarray(pmax_stats[d].samples))) for d in (4, 8, 16)]
    slope = np.polyfit(np.log([4.0, 8.0, 16.0]), medians, 1)[0]
    assert abs(slope / 0.5 - 1.0) < 0.15


@pytest.mark.xfail(
    strict=True,
    reason="at 1e5 samples the collapse sup-distance grows from the (2,4) to "
    "the (4,8) pair; checked across several seeds and at 1e6 samples",
)
def test_criterion_08_collapse_distance_decreases(pmax_stats):
    report = scaling_collapse([(d, pmax_stats[d]) for d in (2, 4, 8)])
    sups = {(a, b): s for a, b, s in report.pairwise_sup}
    assert sups[(4, 8)] < sups[(2, 4)]


def test_criterion_09_plateau_law():
    for k in range(100):
        gen = sample_with_label(3, "partially_localised", seed=10000 + k)
        trace = evolve_chain(gen, 600)
        lo, hi = trace.plateau_band
        tail = trace.t_avg[-len(trace.t_avg) // 4:]
        assert np.all((tail >= lo) & (tail <= hi))
        mods = np.abs(classify(gen).spectrum)
        expected = trace.beta * np.log(mods[classify(gen).d_u - 1])
        assert trace.beta in (1, 2)
        assert abs(trace.decay_rate_fit / expected - 1.0) < 0.20


def test_criterion_10_reproducibility(tmp_path):
    portrait = tmp_path / "portrait.json"
    portrait.write_text(json.dumps({
        "experiment": "portrait",
        "seed": 0,
        "out": str(tmp_path / "first"),
        "params": {"A": 0.5, "lam": 0.628319, "n_steps": 200,
                   "initial_conditions": [[0.2, 0.0], [0.5, 3.141592653589793]]},
    }))
    assert main(["portrait", "--config", str(portrait)]) == 0
    assert main(["portrait", "--config", str(portrait),
                 "--out", str(tmp_path / "second")]) == 0
    first = {p.name: p.read_bytes() for p in sorted((tmp_path / "first").iterdir())}
    second = {p.name: p.read_bytes() for p in sorted((tmp_path / "second").iterdir())}
    assert first == second

    pmax_cfg = tmp_path / "pmax.json"
    pmax_cfg.write_text(json.dumps({
        "experiment": "pmax",
        "seed": 11,
        "out": str(tmp_path / "serial"),
        "params": {"ds": [2], "n_samples": 2000},
    }))
    assert main(["pmax", "--config", str(pmax_cfg)]) == 0
    assert main(["pmax", "--config", str(pmax_cfg), "--parallel", "3",
                 "--out", str(tmp_path / "parallel")]) == 0
    serial = {p.name: p.read_bytes() for p in sorted((tmp_path / "serial").iterdir())}
    parallel = {p.name: p.read_bytes() for p in sorted((tmp_path / "parallel").iterdir())}
    assert serial == parallel
