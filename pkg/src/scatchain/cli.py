"""Experiment runner: every study in the package as a reproducible subcommand.

Each subcommand reads a JSON config file, applies the ``--seed`` /
``--out`` / ``--parallel`` overrides, runs the corresponding library
routines and writes plain CSV/JSON artifacts for external plotting.
Artifacts embed the hash of the content-determining part of the config
(experiment id, parameters, seed) together with the seed in a header
comment; every float is written in its shortest round-trip decimal form.
Reruns with the same config are byte-identical, and the parallelism
degree never changes the output (it only rearranges who computes which
fixed work item).

Exit codes: 0 success; 2 config error; 3 numerical failure;
4 an assertion missed its threshold in ``--check`` mode.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ensemble import EnsembleStats
from .haar import (
    HaarSampler,
    MeasureEstimate,
    canonical_set_id,
    fit_measure_scaling,
    measure_estimate,
    measure_estimate_adaptive,
    pmax_distribution,
    pu_distribution,
    sample_with_label,
    scaling_collapse,
    tail_exponent,
)
from .multi_channel import TAU_SPEC, classify, evolve_chain
from .single_channel import (
    DisorderModel,
    MarginalDiscriminantError,
    SingleChannelParams,
    decay_rate_series,
    discriminant,
    fixed_points,
    gaussian_prediction,
    initial_state,
    integral_F_values,
    noisy_step,
    static_orbit,
)
from .smatrix import (
    ScatteringError,
    ScatteringMatrix,
    TransferMatrix,
    UnitarityError,
    compose,
    load_matrix,
    s_to_t,
    t_to_s,
    transport,
    unitarity_residual,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunResult",
    "EXPERIMENTS",
    "run_portrait",
    "run_noisy_portrait",
    "run_decay_hist",
    "run_evolve",
    "run_classify",
    "run_measure_suite",
    "run_spectral_suite",
    "run_fit",
    "main",
]

EXPERIMENTS = (
    "portrait", "noisy-portrait", "decay-hist", "evolve", "classify",
    "measure", "pmax", "pu", "collapse", "fit",
)

# Default residual / threshold constants of the embedded --check assertions.
CHECK_RESIDUAL = 1e-10        # unitarity along an evolved chain
CHECK_CROSS_FORMALISM = 1e-8  # S-composition vs transfer-power transmission
CHECK_F_DRIFT = 1e-8          # relative drift of the ballistic invariant
CHECK_ATTRACTOR = 1e-6        # distance to the localised fixed point
CHECK_PAIRING = 1e-8          # spectrum inversion-symmetry residual
CHECK_MASS = 1e-12            # histogram + point-mass normalisation
CHECK_TAIL_EXPONENT = (-3.0, 0.3)
CHECK_AMPLITUDE = (4.0, 0.3)
CHECK_RATE_MARGIN = 0.2       # envelope rate vs beta * slowest expanding log
# A near-circle density this much below the peak counts as "vanishing at
# the unit circle" for the P_max check.
CHECK_NEAR_CIRCLE_FRAC = 0.2


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run: id, parameters, seed, parallelism, output dir.

    ``content_hash`` covers only what determines artifact content —
    experiment id, parameters and seed.  The output directory and the
    parallelism degree are deliberately left out: moving the output or
    changing the worker count must not change a single byte.
    """

    experiment: str
    params: dict
    seed: int = 0
    parallel: int = 1
    out: str = "out"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"experiment: unknown id {self.experiment!r}; expected one of {EXPERIMENTS}")
        if not isinstance(self.params, dict):
            raise ConfigError("params: must be an object")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed: must be a non-negative integer")
        if not isinstance(self.parallel, int) or self.parallel < 1:
            raise ConfigError("parallel: must be an integer >= 1")

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "params": self.params,
            "seed": self.seed,
            "parallel": self.parallel,
            "out": self.out,
        }

    @classmethod
    def from_json(cls, spec: dict) -> "ExperimentConfig":
        if not isinstance(spec, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(spec) - {"experiment", "params", "seed", "parallel", "out"}
        if unknown:
            raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
        if "experiment" not in spec:
            raise ConfigError("experiment: missing")
        return cls(
            experiment=spec["experiment"],
            params=spec.get("params", {}),
            seed=spec.get("seed", 0),
            parallel=spec.get("parallel", 1),
            out=spec.get("out", "out"),
        )

    def content_hash(self) -> str:
        payload = {"experiment": self.experiment, "params": self.params, "seed": self.seed}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class RunResult:
    """Artifacts written, check outcomes and informational notices."""

    paths: list = field(default_factory=list)
    checks: list = field(default_factory=list)   # (name, passed, detail)
    notices: list = field(default_factory=list)

    def check(self, name: str, passed: bool, detail: str) -> None:
        self.checks.append((name, bool(passed), detail))

    @property
    def failed(self) -> list:
        return [c for c in self.checks if not c[1]]


# ---------------------------------------------------------------------------
# config field access


_REQUIRED = object()


def _param(params: dict, key: str, default=_REQUIRED):
    if key in params:
        return params[key]
    if default is _REQUIRED:
        raise ConfigError(f"params.{key}: missing")
    return default


def _int_param(params: dict, key: str, default=_REQUIRED, minimum: int | None = None) -> int:
    val = _param(params, key, default)
    if not isinstance(val, int) or isinstance(val, bool):
        raise ConfigError(f"params.{key}: must be an integer, got {val!r}")
    if minimum is not None and val < minimum:
        raise ConfigError(f"params.{key}: must be >= {minimum}, got {val}")
    return val


def _float_param(params: dict, key: str, default=_REQUIRED,
                 lo: float | None = None, hi: float | None = None) -> float:
    val = _param(params, key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"params.{key}: must be a number, got {val!r}")
    val = float(val)
    if not np.isfinite(val):
        raise ConfigError(f"params.{key}: must be finite")
    if lo is not None and val < lo or hi is not None and val > hi:
        raise ConfigError(f"params.{key}: must lie in [{lo}, {hi}], got {val}")
    return val


def _str_param(params: dict, key: str, choices, default=_REQUIRED) -> str:
    val = _param(params, key, default)
    if val not in choices:
        raise ConfigError(f"params.{key}: expected one of {tuple(choices)}, got {val!r}")
    return val


def _ds_param(params: dict, key: str = "ds") -> list:
    ds = _param(params, key)
    if not isinstance(ds, list) or not ds:
        raise ConfigError(f"params.{key}: must be a non-empty list of channel counts")
    for i, d in enumerate(ds):
        if not isinstance(d, int) or isinstance(d, bool) or d < 1:
            raise ConfigError(f"params.{key}[{i}]: must be an integer >= 1, got {d!r}")
    return ds


# ---------------------------------------------------------------------------
# artifact writers


def _py(obj):
    """Convert numpy containers/scalars into plain JSON-serialisable types."""
    if isinstance(obj, dict):
        return {k: _py(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_py(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_py(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _fmt(x) -> str:
    """One CSV cell: shortest round-trip decimals for floats, plain ints."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(cfg: ExperimentConfig, result: RunResult, name: str,
               columns, rows) -> Path:
    path = Path(cfg.out) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# config_hash={cfg.content_hash()} seed={cfg.seed}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")
    result.paths.append(str(path))
    return path


def _write_json(cfg: ExperimentConfig, result: RunResult, name: str, payload: dict) -> Path:
    path = Path(cfg.out) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"config_hash": cfg.content_hash(), "seed": cfg.seed, **payload}
    path.write_text(json.dumps(_py(body), sort_keys=True, indent=2) + "\n")
    result.paths.append(str(path))
    return path


def _hist_rows(stats: EnsembleStats):
    dens = stats.density()
    for i in range(len(stats.counts)):
        yield (stats.edges[i], stats.edges[i + 1], int(stats.counts[i]), dens[i])


def _wrap(x):
    """Reduce angles to the principal interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x), 2.0 * np.pi)


# ---------------------------------------------------------------------------
# shared builders


def _disorder_model(params: dict, seed: int) -> DisorderModel:
    spec = _param(params, "model")
    if not isinstance(spec, dict):
        raise ConfigError("params.model: must be an object of parameter distributions")
    spec = dict(spec)
    spec["seed"] = seed
    try:
        return DisorderModel.from_json(spec)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"params.model: {exc}") from exc


def _load_generator(params: dict, seed: int) -> tuple:
    """Build the multichannel generator: Haar-sampled, from file, or inline.

    Returns ``(matrix, provenance)`` where provenance records how the
    matrix was obtained (for the artifact header).
    """
    spec = _param(params, "generator")
    if not isinstance(spec, dict):
        raise ConfigError("params.generator: must be an object")
    kinds = [k for k in ("haar", "file", "re") if k in spec]
    if len(kinds) != 1:
        raise ConfigError(
            "params.generator: give exactly one of 'haar', 'file' or inline 're'/'im'")
    if kinds[0] == "haar":
        sub = spec["haar"]
        if not isinstance(sub, dict):
            raise ConfigError("params.generator.haar: must be an object")
        d = sub.get("d")
        if not isinstance(d, int) or isinstance(d, bool) or d < 1:
            raise ConfigError("params.generator.haar.d: must be an integer >= 1")
        label = sub.get("label")
        if label is not None:
            try:
                s = sample_with_label(d, label, seed)
            except ValueError as exc:
                raise ConfigError(f"params.generator.haar.label: {exc}") from exc
            return s, {"kind": "haar", "d": d, "label": label, "seed": seed}
        s = HaarSampler(d, seed).sample()
        return s, {"kind": "haar", "d": d, "seed": seed}
    if kinds[0] == "file":
        try:
            s, res = load_matrix(spec["file"])
        except OSError as exc:
            raise ConfigError(f"params.generator.file: {exc}") from exc
        except (UnitarityError, ScatteringError, KeyError) as exc:
            raise ConfigError(f"params.generator.file: {exc}") from exc
        return s, {"kind": "file", "path": str(spec["file"]), "residual": res}
    re_part = spec.get("re")
    im_part = spec.get("im")
    if re_part is None or im_part is None:
        raise ConfigError("params.generator: inline matrices need both 're' and 'im'")
    try:
        mat = np.asarray(re_part, dtype=float) + 1j * np.asarray(im_part, dtype=float)
        s = ScatteringMatrix(mat)
    except (ValueError, ScatteringError) as exc:
        raise ConfigError(f"params.generator: {exc}") from exc
    res = unitarity_residual(s)
    if res > 1e-9:
        raise ConfigError(
            f"params.generator: matrix is not unitary (residual {res!r} > 1e-09)")
    return s, {"kind": "inline", "residual": res}


def _check_targets(params: dict, allowed: tuple) -> dict:
    targets = params.get("checks", {})
    if not isinstance(targets, dict):
        raise ConfigError("params.checks: must be an object")
    unknown = sorted(set(targets) - set(allowed))
    if unknown:
        raise ConfigError(f"params.checks: unknown keys {unknown}")
    return targets


# ---------------------------------------------------------------------------
# experiments: single channel


def _static_generator(params: dict) -> SingleChannelParams:
    a = _float_param(params, "A", lo=0.0, hi=1.0)
    alpha = _float_param(params, "alpha_left", default=0.0)
    if "lam" in params and ("beta_left" in params or "beta_right" in params):
        raise ConfigError("params.lam: give either lam or beta_left/beta_right, not both")
    if "lam" in params:
        beta_l = beta_r = _float_param(params, "lam")
    else:
        beta_l = _float_param(params, "beta_left")
        beta_r = _float_param(params, "beta_right")
    return SingleChannelParams(a, alpha, beta_l, beta_r)


def _initial_conditions(params: dict) -> tuple:
    ics = _param(params, "initial_conditions")
    if not isinstance(ics, list) or not ics:
        raise ConfigError("params.initial_conditions: must be a non-empty list of [A0, chi0]")
    a0, chi0 = [], []
    for i, ic in enumerate(ics):
        if not isinstance(ic, (list, tuple)) or len(ic) != 2:
            raise ConfigError(f"params.initial_conditions[{i}]: expected a pair [A0, chi0]")
        a, chi = ic
        if isinstance(a, bool) or not isinstance(a, (int, float)) or not 0.0 <= a <= 1.0:
            raise ConfigError(f"params.initial_conditions[{i}][0]: A0 must lie in [0, 1]")
        if isinstance(chi, bool) or not isinstance(chi, (int, float)) or not np.isfinite(chi):
            raise ConfigError(f"params.initial_conditions[{i}][1]: chi0 must be finite")
        a0.append(float(a))
        chi0.append(float(chi))
    return np.asarray(a0), np.asarray(chi0)


def run_portrait(cfg: ExperimentConfig, check: bool = False) -> RunResult:
    """Orbits of the static lengthening map from a grid of initial points."""
    result = RunResult()
    p = cfg.params
    gen = _static_generator(p)
    a0, chi0 = _initial_conditions(p)
    n_steps = _int_param(p, "n_steps", minimum=1)

    a_traj, c_traj = static_orbit(gen, a0, chi0, n_steps)
    rows = []
    for ic in range(a0.size):
        for k in range(n_steps + 1):
            rows.append((ic, k, a_traj[k, ic], c_traj[k, ic]))
    _write_csv(cfg, result, "orbits.csv", ("ic_id", "step", "A", "chi"), rows)

    disc = discriminant(gen)
    try:
        fp = fixed_points(gen)
        fp_payload = {
            "kind": fp.kind, "A": fp.A, "chi": fp.chi,
            "discriminant": fp.discriminant, "multiplier": fp.multiplier,
        }
    except MarginalDiscriminantError:
        fp = None
        fp_payload = {"kind": "marginal", "discriminant": disc}
        result.notices.append("generator sits on the marginal manifold D = 0")
    _write_json(cfg, result, "fixed_point.json", {"fixed_point": fp_payload})

    if check:
        _check_targets(p, ())
        if fp is None:
            result.notices.append("marginal generator: dichotomy checks skipped")
        elif disc < 0.0:
            if float(np.max(a_traj)) >= 1.0:
                result.check("ballistic orbits bounded", False,
                             "an orbit reached the perfect-reflection corner A = 1")
            else:
                f = integral_F_values(a_traj, c_traj, gen)
                drift = float(np.max(np.abs(f - f[0])))
                scale = max(1.0, float(np.max(np.abs(f[0]))))
                result.check("ballistic orbits bounded (F conserved)",
                             drift <= CHECK_F_DRIFT * scale,
                             f"max |F_n - F_1| = {drift!r}")
        else:
            gap_a = float(np.max(1.0 - a_traj[-1]))
            gap_chi = float(np.max(np.abs(_wrap(c_traj[-1] - fp.chi))))
            result.check("orbits converge to the localised attractor",
                         gap_a <= CHECK_ATTRACTOR and gap_chi <= CHECK_ATTRACTOR,
                         f"max 1 - A = {gap_a!r}, max |chi - chi_a| = {gap_chi!r}")
    return result


def run_noisy_portrait(cfg: ExperimentConfig, check: bool = False) -> RunResult:
    """Orbits of the lengthening map with per-step disorder."""
    result = RunResult()
    p = cfg.params
    model = _disorder_model(p, cfg.seed)
    n_steps = _int_param(p, "n_steps", minimum=1)
    n_chains = _int_param(p, "n_chains", minimum=1)
    record_every = _int_param(p, "record_every", default=1, minimum=1)

    a = np.empty((n_steps, n_chains))
    b = np.empty((n_steps, n_chains))
    lam = np.empty((n_steps, n_chains))
    alpha = np.empty((n_steps, n_chains))
    for j in range(n_chains):
        rng = model.chain_stream(j)
        a[:, j], b[:, j], lam[:, j], alpha[:, j] = model.sample_params(rng, n_steps)

    state = initial_state(SingleChannelParams(a[0], alpha[0], lam[0], lam[0]))
    recorded = [(1, state.A.copy(), state.phi.copy(), np.asarray(state.log_B).copy())]
    for k in range(1, n_steps):
        state = noisy_step(state, SingleChannelParams(a[k], alpha[k], lam[k], lam[k]))
        if state.n % record_every == 0 or state.n == n_steps:
            recorded.append((state.n, state.A.copy(), state.phi.copy(),
                             np.asarray(state.log_B).copy()))
    rows = []
    for j in range(n_chains):
        for n, a_rec, phi_rec, logb_rec in recorded:
            rows.append((j, n, a_rec[j], phi_rec[j], logb_rec[j]))
    _write_csv(cfg, result, "noisy_orbits.csv",
               ("chain_id", "n", "A", "phi", "log_B"), rows)

    if check:
        # Spot-check the reduced map against explicit matrix composition on
        # the first chain: the reconstructed 2x2 unitary must track the
        # composed one within the per-step map tolerance.
        steps = min(n_steps, 200)
        gen0 = SingleChannelParams(a[0, 0], alpha[0, 0], lam[0, 0], lam[0, 0])
        st = initial_state(gen0)
        s = gen0.to_smatrix()
        dev = 0.0
        for k in range(1, steps):
            gen_k = SingleChannelParams(a[k, 0], alpha[k, 0], lam[k, 0], lam[k, 0])
            st = noisy_step(st, gen_k)
            s = compose(s, gen_k.to_smatrix())
            dev = max(dev, float(np.max(np.abs(st.to_smatrix().mat - s.mat))))
        result.check("reduced map agrees with matrix composition",
                     dev <= 1e-10 * steps, f"max deviation {dev!r} over {steps} steps")

        targets = _check_targets(p, ("f_band", "static_A", "static_lam"))
        if "f_band" in targets:
            band = targets["f_band"]
            static_a = targets.get("static_A")
            static_lam = targets.get("static_lam")
            if static_a is None or static_lam is None:
                raise ConfigError("params.checks: f_band needs static_A and static_lam")
            ref = SingleChannelParams(float(static_a), 0.0, float(static_lam), float(static_lam))
            worst = 0.0
            a_rec = np.stack([r[1] for r in recorded])
            phi_rec = np.stack([r[2] for r in recorded])
            if float(np.max(a_rec)) >= 1.0:
                result.check("orbits stay in the invariant band", False,
                             "an orbit reached A = 1")
            else:
                f = integral_F_values(a_rec, phi_rec, ref)
                worst = float(np.max(np.abs(f - f[0])))
                result.check("orbits stay in the invariant band",
                             worst <= float(band),
                             f"max |F_n - F_1| = {worst!r} vs band {float(band)!r}")
    return result


def run_decay_hist(cfg: ExperimentConfig, check: bool = False) -> RunResult:
    """Decay-rate histogram at fixed length against the Gaussian limit."""
    from scipy import special, stats as sstats

    result = RunResult()
    p = cfg.params
    model = _disorder_model(p, cfg.seed)
    n = _int_param(p, "n", minimum=1)
    ensemble = _int_param(p, "ensemble", minimum=1)
    bins = _int_param(p, "bins", default=60, minimum=1)
    mode = _str_param(p, "mode", ("full", "approx"), default="full")
    pred_spec = p.get("prediction", {})
    if not isinstance(pred_spec, dict):
        raise ConfigError("params.prediction: must be an object")
    burn_in = _int_param(pred_spec, "burn_in", default=1000, minimum=0)
    pred_samples = _int_param(pred_spec, "samples", default=100000, minimum=64)
    walkers = _int_param(pred_spec, "walkers", default=32, minimum=2)

    ens = decay_rate_series(model, n, ensemble, mode=mode, bins=bins)
    pred = gaussian_prediction(model, burn_in=burn_in, samples=pred_samples, walkers=walkers)
    dist = pred.distribution(n)

    _write_csv(cfg, result, "hist.csv",
               ("bin_lo", "bin_hi", "count", "density"), _hist_rows(ens))
    grid = np.linspace(float(ens.edges[0]), float(ens.edges[-1]), 513)
    _write_csv(cfg, result, "prediction.csv", ("I", "density"),
               zip(grid, dist.pdf(grid)))

    finite = ens.samples[np.isfinite(ens.samples)]
    report = {
        "n": n,
        "ensemble": ensemble,
        "mode": mode,
        "n_nonfinite": ens.n_nonfinite,
        "predicted_mean": pred.mean,
        "predicted_variance": pred.variance,
        "predicted_mean_se": pred.mean_se,
        "predicted_variance_se": pred.variance_se,
        "prediction_converged": pred.converged,
        "ks_statistic": None,
        "ks_critical_1pct": None,
    }
    if ens.n_nonfinite:
        result.notices.append(
            f"{ens.n_nonfinite} chains had zero transmission (I = -inf)")
    if ens.n_finite >= 4:
        mom = ens.moment_summary()
        report.update(sample_mean=mom.mean, sample_mean_se=mom.mean_se,
                      sample_variance=mom.variance, sample_variance_se=mom.variance_se,
                      sample_variance_scaled=n * mom.variance,
                      sample_skewness=mom.skewness, sample_skewness_se=mom.skewness_se)
    if ensemble == 1:
        warnings.warn("single-sample ensemble: no distribution comparison", stacklevel=2)
        result.notices.append("ensemble = 1: KS comparison skipped")
    elif finite.size >= 2:
        ks = sstats.kstest(finite, dist.cdf)
        report["ks_statistic"] = float(ks.statistic)
        report["ks_critical_1pct"] = float(special.kolmogi(0.01) / np.sqrt(finite.size))
    else:
        result.notices.append("too few finite samples: KS comparison skipped")
    _write_json(cfg, result, "report.json", report)

    if check:
        targets = _check_targets(
            p, ("mean", "mean_tol", "variance", "variance_rtol", "ks"))
        if report["ks_statistic"] is not None and targets.get("ks", True):
            result.check("histogram matches the Gaussian limit (KS, 1%)",
                         report["ks_statistic"] < report["ks_critical_1pct"],
                         f"KS = {report['ks_statistic']!r}, "
                         f"critical = {report['ks_critical_1pct']!r}")
        elif not targets.get("ks", True):
            result.notices.append("KS comparison disabled by the config")
        if "mean" in targets and "sample_mean" in report:
            tol = float(targets.get("mean_tol", 0.02))
            dev = abs(report["sample_mean"] - float(targets["mean"]))
            result.check("sample mean on target", dev <= tol,
                         f"|mean - {targets['mean']!r}| = {dev!r} vs {tol!r}")
        if "variance" in targets and "sample_variance_scaled" in report:
            # The target is the variance of the limiting Gaussian at unit
            # length, i.e. n * var(I_n).
            rtol = float(targets.get("variance_rtol", 0.1))
            dev = abs(report["sample_variance_scaled"] - float(targets["variance"]))
            result.check("scaled sample variance on target",
                         dev <= rtol * float(targets["variance"]),
                         f"|n var - {targets['variance']!r}| = {dev!r}")
    return result


# ---------------------------------------------------------------------------
# experiments: multichannel


def run_evolve(cfg: ExperimentConfig, check: bool = False) -> RunResult:
    """Grow a translationally invariant chain and record its transport."""
    result = RunResult()
    p = cfg.params
    gen, provenance = _load_generator(p, cfg.seed)
    n_max = _int_param(p, "n_max", minimum=1)
    record_every = _int_param(p, "record_every", default=1, minimum=1)
    tail_frac = _float_param(p, "tail_frac", default=0.25, lo=0.01, hi=0.9)
    project = bool(p.get("project", False))

    trace = evolve_chain(gen, n_max, record_every=record_every,
                         project=project, tail_frac=tail_frac)
    _write_csv(cfg, result, "trace.csv",
               ("n", "T_n", "R_n", "unitarity_residual"),
               zip(trace.n, trace.t_avg, trace.r_avg, trace.residual))
    cls_ = trace.classification
    _write_json(cfg, result, "classification.json", {
        "generator": provenance,
        **cls_.to_json(),
        "plateau": trace.plateau,
        "plateau_band": list(trace.plateau_band) if trace.plateau_band else None,
        "decay_rate_fit": trace.decay_rate_fit,
        "beta": trace.beta,
    })
    _write_json(cfg, result, "generator.json",
                {"d": gen.d, "re": gen.mat.real.tolist(), "im": gen.mat.imag.tolist()})

    if check:
        _check_targets(p, ())
        worst = float(np.max(trace.residual))
        result.check("chain stays unitary", worst <= CHECK_RESIDUAL,
                     f"max residual {worst!r}")
        small = [int(n) for n in trace.n if n <= 10]
        if small:
            t_gen = s_to_t(gen)
            power = np.eye(2 * gen.d, dtype=complex)
            direct = {}
            for n in range(1, max(small) + 1):
                power = power @ t_gen.mat
                if n in small:
                    direct[n] = transport(t_to_s(TransferMatrix(power))).t_avg
            dev = max(abs(direct[n] - float(trace.t_avg[list(trace.n).index(n)]))
                      for n in small)
            result.check("transmission matches transfer powers (n <= 10)",
                         dev <= CHECK_CROSS_FORMALISM, f"max deviation {dev!r}")
        else:
            result.notices.append("no recorded points at n <= 10: cross-check skipped")
        if trace.decay_rate_fit is not None and cls_.d_u > 0:
            mods = np.abs(cls_.spectrum)
            expanding = mods[mods > 1.0 + TAU_SPEC]
            expected = trace.beta * float(np.log(np.min(expanding)))
            ratio = trace.decay_rate_fit / expected
            result.check("envelope rate matches beta * slowest expanding mode",
                         abs(ratio - 1.0) <= CHECK_RATE_MARGIN,
                         f"fit/expected = {ratio!r}")
    return result


def run_classify(cfg: ExperimentConfig, check: bool = False) -> RunResult:
    """Spectral classification of one generator."""
    result = RunResult()
    p = cfg.params
    gen, provenance = _load_generator(p, cfg.seed)
    tol = _float_param(p, "tol", default=TAU_SPEC, lo=0.0)
    cls_ = classify(gen, tol=tol)
    _write_json(cfg, result, "classification.json",
                {"generator": provenance, **cls_.to_json()})
    _write_json(cfg, result, "generator.json",
                {"d": gen.d, "re": gen.mat.real.tolist(), "im": gen.mat.imag.tolist()})

    if check:
        _check_targets(p, ())
        vals = cls_.spectrum
        worst = 0.0
        for v in vals:
            target = 1.0 / np.conj(v)
            worst = max(worst, float(np.min(np.abs(vals - target)) / max(1.0, abs(target))))
        result.check("spectrum symmetric under inversion at the circle",
                     worst <= CHECK_PAIRING, f"max pairing residual {worst!r}")
        det_mod = float(np.abs(np.prod(np.abs(vals))))
        result.check("eigenvalue moduli multiply to one",
                     abs(det_mod - 1.0) <= CHECK_PAIRING, f"|prod |kappa|| = {det_mod!r}")
    return result


# ---------------------------------------------------------------------------
# experiments: Haar surveys


def _sampling_spec(p: dict) -> dict:
    spec = p.get("sampling", {})
    if not isinstance(spec, dict):
        raise ConfigError("params.sampling: must be an object")
    mode = _str_param(spec, "mode", ("adaptive", "fixed"), default="adaptive")
    out = {"mode": mode}
    if mode == "adaptive":
        out["rel_ci_width"] = _float_param(spec, "rel_ci_width", default=0.2, lo=1e-3, hi=1.0)
        out["n_cap"] = _int_param(spec, "n_cap", default=10**7, minimum=1)
        out["n_min"] = _int_param(spec, "n_min", default=10**4, minimum=1)
    else:
        n_samples = _param(spec, "n_samples")
        if isinstance(n_samples, dict):
            try:
                out["n_samples"] = {int(k): int(v) for k, v in n_samples.items()}
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"params.sampling.n_samples: {exc}") from exc
        elif isinstance(n_samples, int) and not isinstance(n_samples, bool):
            out["n_samples"] = n_samples
        else:
            raise ConfigError("params.sampling.n_samples: integer or per-d object")
    return out


def run_measure_suite(cfg: ExperimentConfig, check: bool = False) -> RunResult:
    """Haar-measure estimates across d plus the two scaling-law fits."""
    result = RunResult()
    p = cfg.params
    ds = _ds_param(p)
    sets = p.get("sets", ["M_b", "M_l_star"])
    if not isinstance(sets, list) or not sets:
        raise ConfigError("params.sets: must be a non-empty list")
    try:
        sets = list(dict.fromkeys(canonical_set_id(s) for s in sets))
    except ValueError as exc:
        raise ConfigError(f"params.sets: {exc}") from exc
    sampling = _sampling_spec(p)
    workers = cfg.parallel

    estimates = {}
    diagnostics = []
    for set_id in sets:
        for d in ds:
            if sampling["mode"] == "adaptive":
                est = measure_estimate_adaptive(
                    d, set_id, cfg.seed,
                    rel_width=sampling["rel_ci_width"] / 2.0,
                    n_cap=sampling["n_cap"], n_min=sampling["n_min"],
                    workers=workers)
                capped = est.n_samples >= sampling["n_cap"] and (
                    est.hits == 0
                    or (est.ci_hi - est.ci_lo) > sampling["rel_ci_width"] * est.estimate)
            else:
                n_samples = sampling["n_samples"]
                if isinstance(n_samples, dict):
                    if d not in n_samples:
                        raise ConfigError(f"params.sampling.n_samples: no entry for d = {d}")
                    n_samples = n_samples[d]
                est = measure_estimate(d, set_id, n_samples, cfg.seed, workers=workers)
                capped = False
            estimates.setdefault(set_id, []).append(est)
            diagnostics.append({
                "d": d, "set": set_id, "n_redrawn": est.n_redrawn,
                "n_marginal": est.n_marginal, "upper_bound": capped or est.hits == 0,
            })
            if capped:
                result.notices.append(
                    f"{set_id} at d = {d}: sample cap reached before the CI target; "
                    "treat the interval as an upper bound")

    rows = [est.to_row() for set_id in sets for est in estimates[set_id]]
    _write_csv(cfg, result, "measures.csv",
               ("d", "set", "n_samples", "hits", "estimate", "ci_lo", "ci_hi"), rows)

    fits = {}
    for set_id in sets:
        model = {"ballistic": "ballistic", "totally_localised": "totally_localised"}.get(set_id)
        if model is None:
            result.notices.append(f"no scaling model for set {set_id}: fit skipped")
            continue
        usable = [e for e in estimates[set_id] if e.hits > 0]
        skipped = [e.d for e in estimates[set_id] if e.hits == 0]
        if skipped:
            warnings.warn(f"zero-hit d values excluded from the {model} fit: {skipped}",
                          stacklevel=2)
            result.notices.append(f"{set_id}: zero-hit d excluded from fit: {skipped}")
        if len(usable) < 2:
            result.notices.append(f"{set_id}: fewer than two usable points, fit skipped")
            continue
        fit = fit_measure_scaling(usable, model)
        fits[model] = fit
        _write_json(cfg, result, f"fit_{model}.json", fit.to_json())
    _write_json(cfg, result, "summary.json", {"diagnostics": diagnostics})

    if check:
        targets = _check_targets(p, ("ballistic", "totally_localised"))
        for model, spec in targets.items():
            if not isinstance(spec, dict) or "rate" not in spec:
                raise ConfigError(f"params.checks.{model}: needs a 'rate' target")
            if model not in fits:
                result.check(f"{model} rate on target", False, "fit unavailable")
                continue
            rate = fits[model].rate
            target = float(spec["rate"])
            rtol = float(spec.get("rtol", 0.1))
            result.check(f"{model} rate on target",
                         abs(rate - target) <= rtol * abs(target),
                         f"rate = {rate!r} vs {target!r} (rtol {rtol!r})")
        for model, fit in fits.items():
            result.check(f"{model} rate positive", fit.rate > 0.0, f"rate = {fit.rate!r}")
    return result


def _window_pair(window, ctx: str) -> tuple:
    if (not isinstance(window, (list, tuple)) or len(window) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in window)
            or not float(window[0]) < float(window[1])):
        raise ConfigError(f"{ctx}: expected [lo, hi] with lo < hi")
    return (float(window[0]), float(window[1]))


def _pmax_window(params: dict, d: int) -> tuple:
    window = params.get("window")
    if window is None:
        # Fixed window in the scaled variable t / sqrt(d/2): far enough out
        # to sit in the algebraic tail at every d.
        scale = np.sqrt(d / 2.0)
        return (4.0 * scale, 14.0 * scale)
    return _window_pair(window, "params.window")


def run_spectral_suite(cfg: ExperimentConfig, check: bool = False,
                       which: str = "pmax") -> RunResult:
    """P_max / P_u histograms per d, tail fits, and the scaling collapse."""
    result = RunResult()
    p = cfg.params
    ds = _ds_param(p)
    n_samples = _int_param(p, "n_samples", minimum=1)
    bins_linear = _int_param(p, "bins_linear", default=40, minimum=0)
    bins_log = _int_param(p, "bins_log", default=40, minimum=0)
    if which in ("pmax", "collapse") and (bins_linear < 1 or bins_log < 1):
        raise ConfigError("params.bins_linear/bins_log: need at least one bin of each kind")
    workers = cfg.parallel

    if which == "pu":
        summary = []
        for d in ds:
            stats = pu_distribution(d, n_samples, cfg.seed, workers=workers)
            _write_csv(cfg, result, f"pu_d{d}.csv",
                       ("bin_lo", "bin_hi", "count", "density"), _hist_rows(stats))
            frac = stats.samples
            summary.append({
                "d": d, "n_samples": stats.n_total,
                "mean_fraction": float(np.mean(frac)),
                "mass_at_0": float(np.count_nonzero(frac == 0.0) / stats.n_total),
                "mass_at_1": float(np.count_nonzero(frac == 1.0) / stats.n_total),
            })
        _write_json(cfg, result, "pu_summary.json", {"distributions": summary})
        if check:
            _check_targets(p, ())
            for entry in summary:
                total = entry["mass_at_0"] + entry["mass_at_1"]
                result.check(f"d={entry['d']}: endpoint masses within [0, 1]",
                             0.0 <= total <= 1.0, f"mass(0)+mass(1) = {total!r}")
            means = [e["mean_fraction"] for e in summary]
            if len(means) >= 2 and p.get("expect_increasing_mean", True):
                increasing = all(m2 > m1 for m1, m2 in zip(means, means[1:]))
                result.check("mean expanding fraction increases with d",
                             increasing, f"means = {means!r}")
        return result

    stats_by_d = []
    for d in ds:
        stats = pmax_distribution(d, n_samples, cfg.seed, workers=workers,
                                  bins_linear=bins_linear, bins_log=bins_log)
        stats_by_d.append((d, stats))

    if which == "pmax":
        summary = []
        for d, stats in stats_by_d:
            _write_csv(cfg, result, f"pmax_d{d}.csv",
                       ("bin_lo", "bin_hi", "count", "density"), _hist_rows(stats))
            point_mass = stats.point_masses.get(1.0, 0)
            mass_total = (float(np.sum(stats.counts)) + point_mass
                          + stats.n_nonfinite) / stats.n_total
            window = _pmax_window(p, d)
            try:
                exponent, exponent_se = tail_exponent(stats, window)
            except ValueError as exc:
                exponent = exponent_se = None
                result.notices.append(f"d = {d}: tail fit skipped ({exc})")
            summary.append({
                "d": d, "n_samples": stats.n_total,
                "ballistic_mass": point_mass / stats.n_total,
                "mass_total": mass_total,
                "window": list(window),
                "exponent": exponent, "exponent_se": exponent_se,
            })
        _write_json(cfg, result, "pmax_summary.json", {"distributions": summary})
        if check:
            targets = _check_targets(p, ("exponent", "exponent_tol"))
            exp_target = float(targets.get("exponent", CHECK_TAIL_EXPONENT[0]))
            exp_tol = float(targets.get("exponent_tol", CHECK_TAIL_EXPONENT[1]))
            for (d, stats), entry in zip(stats_by_d, summary):
                result.check(f"d={d}: histogram mass plus point mass is 1",
                             abs(entry["mass_total"] - 1.0) <= CHECK_MASS,
                             f"total = {entry['mass_total']!r}")
                if entry["exponent"] is None:
                    result.check(f"d={d}: tail exponent on target", False,
                                 "tail fit unavailable")
                else:
                    dev = abs(entry["exponent"] - exp_target)
                    result.check(f"d={d}: tail exponent on target", dev <= exp_tol,
                                 f"exponent = {entry['exponent']!r}")
                dens = stats.density()
                populated = dens[stats.counts > 0]
                if populated.size:
                    result.check(f"d={d}: density vanishes at the unit circle",
                                 dens[0] <= CHECK_NEAR_CIRCLE_FRAC * float(np.max(populated)),
                                 f"first-bin density = {float(dens[0])!r}, "
                                 f"peak = {float(np.max(populated))!r}")
        return result

    # which == "collapse"
    grid_points = _int_param(p, "grid_points", default=200, minimum=2)
    tail_window = _window_pair(p.get("tail_window", [3.0, 10.0]), "params.tail_window")
    try:
        report = scaling_collapse(stats_by_d, grid_points=grid_points, tail_window=tail_window)
    except ValueError as exc:
        raise ConfigError(f"params.ds: {exc}") from exc
    if report.excluded:
        result.notices.append(
            f"excluded d = {list(report.excluded)}: the single-channel distribution "
            "does not follow the sqrt(d) scaling")
    columns = ["u"] + [f"density_d{d}" for d in report.ds]
    rows = [(report.grid[i], *(dens[i] for dens in report.densities))
            for i in range(report.grid.size)]
    _write_csv(cfg, result, "collapse.csv", columns, rows)
    _write_json(cfg, result, "collapse.json", {
        "ds": list(report.ds),
        "excluded": list(report.excluded),
        "pairwise_sup": [[d1, d2, sup] for d1, d2, sup in report.pairwise_sup],
        "tail_window": list(report.tail_window),
        "tail_amplitude": report.tail_amplitude,
    })
    if check:
        targets = _check_targets(p, ("amplitude", "amplitude_tol"))
        sups = [sup for _, _, sup in report.pairwise_sup]
        if len(sups) >= 2:
            result.check("collapse distance decreases with d",
                         all(s2 < s1 for s1, s2 in zip(sups, sups[1:])),
                         f"sup distances = {sups!r}")
        amp_target = float(targets.get("amplitude", CHECK_AMPLITUDE[0]))
        amp_tol = float(targets.get("amplitude_tol", CHECK_AMPLITUDE[1]))
        dev = abs(report.tail_amplitude - amp_target)
        result.check("scaled tail amplitude on target", dev <= amp_tol,
                     f"amplitude = {report.tail_amplitude!r}")
    return result


def run_fit(cfg: ExperimentConfig, check: bool = False) -> RunResult:
    """Scaling-law fit over a measure table produced by the measure command."""
    result = RunResult()
    p = cfg.params
    model = _str_param(p, "model", ("ballistic", "totally_localised", "total_localised"))
    if model == "total_localised":
        model = "totally_localised"
    set_id = p.get("set", model)
    try:
        set_id = canonical_set_id(set_id)
    except ValueError as exc:
        raise ConfigError(f"params.set: {exc}") from exc
    path = Path(_param(p, "input"))
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"params.input: {exc}") from exc

    estimates = []
    reader = csv.DictReader(line for line in text.splitlines() if not line.startswith("#"))
    try:
        for row in reader:
            if canonical_set_id(row["set"]) != set_id:
                continue
            estimates.append(MeasureEstimate(
                set_id=row["set"], d=int(row["d"]), n_samples=int(row["n_samples"]),
                hits=int(row["hits"]), estimate=float(row["estimate"]),
                ci_lo=float(row["ci_lo"]), ci_hi=float(row["ci_hi"]),
                n_redrawn=0, n_marginal=0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"params.input: malformed measure table ({exc})") from exc
    usable = [e for e in estimates if e.hits > 0]
    if len(usable) < 2:
        raise ConfigError(
            f"params.input: fewer than two usable rows for set {set_id!r}")
    fit = fit_measure_scaling(usable, model)
    _write_json(cfg, result, f"fit_{model}.json", fit.to_json())

    if check:
        targets = _check_targets(p, ("rate", "rtol"))
        if "rate" in targets:
            target = float(targets["rate"])
            rtol = float(targets.get("rtol", 0.1))
            result.check("fitted rate on target",
                         abs(fit.rate - target) <= rtol * abs(target),
                         f"rate = {fit.rate!r} vs {target!r}")
        result.check("fitted rate positive", fit.rate > 0.0, f"rate = {fit.rate!r}")
    return result


# ---------------------------------------------------------------------------
# driver


_RUNNERS = {
    "portrait": run_portrait,
    "noisy-portrait": run_noisy_portrait,
    "decay-hist": run_decay_hist,
    "evolve": run_evolve,
    "classify": run_classify,
    "measure": run_measure_suite,
    "pmax": lambda cfg, check=False: run_spectral_suite(cfg, check, which="pmax"),
    "pu": lambda cfg, check=False: run_spectral_suite(cfg, check, which="pu"),
    "collapse": lambda cfg, check=False: run_spectral_suite(cfg, check, which="collapse"),
    "fit": run_fit,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scatchain",
        description="Reproducible chain-of-scatterers experiments (CSV/JSON artifacts)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        cmd = sub.add_parser(name, help=f"run the {name} experiment")
        cmd.add_argument("--config", required=True, help="JSON config file")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=None, help="override the output directory")
        cmd.add_argument("--parallel", type=int, default=None,
                         help="override the parallelism degree")
        cmd.add_argument("--check", action="store_true",
                         help="run the embedded acceptance assertions")
    return parser


def _load_config(args) -> ExperimentConfig:
    path = Path(args.config)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"--config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--config {path}: invalid JSON ({exc})")
    if not isinstance(raw, dict):
        raise ConfigError(f"--config {path}: root must be a JSON object")
    raw.setdefault("experiment", args.command)
    cfg = ExperimentConfig.from_json(raw)
    if cfg.experiment != args.command:
        raise ConfigError(
            f"experiment: config says {cfg.experiment!r} but the subcommand "
            f"is {args.command!r}")
    return ExperimentConfig(
        experiment=cfg.experiment,
        params=cfg.params,
        seed=args.seed if args.seed is not None else cfg.seed,
        parallel=args.parallel if args.parallel is not None else cfg.parallel,
        out=args.out if args.out is not None else cfg.out,
    )


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        result = _RUNNERS[cfg.experiment](cfg, check=args.check)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ScatteringError, np.linalg.LinAlgError, FloatingPointError,
            ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    for note in result.notices:
        print(f"note: {note}")
    for path in result.paths:
        print(f"wrote {path}")
    if args.check:
        for name, passed, detail in result.checks:
            print(f"check {'PASS' if passed else 'FAIL'}: {name} ({detail})")
        if result.failed:
            return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
