"""Haar-measure surveys of transfer spectra over the unitary group U(2d).

Generators drawn uniformly from U(2d) are classified through their
transfer spectra; the routines here estimate the Haar measures of the
ballistic / localised / totally localised sets, the distributions of the
maximal eigenvalue modulus and of the expanding-mode fraction, and the
empirical scaling laws of those quantities with the channel number.

Reproducibility contract: a survey of ``n_samples`` is split into fixed
batches, task ``i`` drawing from ``SeedSequence([seed, i])``; ill-d
conditioned samples are redrawn from the same stream and tallied.  The
task list depends only on the arguments, and results are merged in task
order, so the output is byte-identical no matter how many workers run
the tasks.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleStats, wilson_interval
from .multi_channel import TAU_SPEC, classify, du_from_spectra, transfer_spectra_batch
from .smatrix import COND_MAX, ScatteringError, ScatteringMatrix

__all__ = [
    "HaarSampler",
    "MeasureEstimate",
    "FitResult",
    "CollapseReport",
    "haar_sample",
    "measure_estimate",
    "measure_estimate_adaptive",
    "fit_measure_scaling",
    "pmax_distribution",
    "pu_distribution",
    "scaling_collapse",
    "tail_exponent",
    "tail_amplitude",
    "sample_with_label",
    "SET_IDS",
    "SET_ALIASES",
    "canonical_set_id",
]

SET_IDS = ("ballistic", "localised", "totally_localised")

# Short set names used in measure tables; accepted everywhere a set_id is.
SET_ALIASES = {"M_b": "ballistic", "M_l": "localised", "M_l_star": "totally_localised"}


def canonical_set_id(set_id: str) -> str:
    """Map either naming scheme onto the classification labels."""
    name = SET_ALIASES.get(set_id, set_id)
    if name not in SET_IDS:
        raise ValueError(
            f"unknown set_id {set_id!r}; expected one of {SET_IDS + tuple(SET_ALIASES)}")
    return name


def haar_sample(rng: np.random.Generator, d: int, n: int) -> np.ndarray:
    """Stack of ``n`` Haar-uniform matrices from U(2d), shape (n, 2d, 2d).

    Complex Ginibre draws orthonormalised by QR, with the R diagonal
    phases pushed back into Q so the distribution is exactly invariant.
    The generator state advances by two standard-normal blocks per call.
    """
    m = 2 * d
    z = rng.standard_normal((n, m, m)) + 1j * rng.standard_normal((n, m, m))
    q, r = np.linalg.qr(z / np.sqrt(2.0))
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    mag = np.abs(diag)
    phase = np.where(mag > 0.0, diag / np.where(mag > 0.0, mag, 1.0), 1.0)
    return q * phase[:, None, :]


class HaarSampler:
    """Sequential Haar sampler on U(2d) with a reproducible stream."""

    def __init__(self, d: int, seed: int):
        if d < 1:
            raise ValueError("need d >= 1")
        self.d = d
        self.seed = seed
        self.counter = 0
        self._rng = np.random.default_rng(seed)

    def sample(self) -> ScatteringMatrix:
        self.counter += 1
        return ScatteringMatrix(haar_sample(self._rng, self.d, 1)[0])

    def sample_batch(self, n: int) -> np.ndarray:
        self.counter += n
        return haar_sample(self._rng, self.d, n)


@dataclass(frozen=True)
class MeasureEstimate:
    """Wilson-interval estimate of the Haar measure of one spectral set."""

    set_id: str
    d: int
    n_samples: int
    hits: int
    estimate: float
    ci_lo: float
    ci_hi: float
    n_redrawn: int
    n_marginal: int

    def to_row(self) -> tuple:
        return (self.d, self.set_id, self.n_samples, self.hits,
                self.estimate, self.ci_lo, self.ci_hi)


@dataclass(frozen=True)
class FitResult:
    """Weighted linear fit of -log(measure) against a scaling variable x(d).

    ``model="ballistic"`` uses x = d(d+1); ``model="totally_localised"``
    uses x = sqrt(d).  The measure law is prefactor * exp(-rate * x).
    """

    model: str
    rate: float
    rate_se: float
    prefactor: float
    n_points: int
    x: tuple
    y: tuple
    sigma: tuple

    def predict(self, d: int) -> float:
        x = d * (d + 1) if self.model == "ballistic" else np.sqrt(d)
        return float(self.prefactor * np.exp(-self.rate * x))

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "rate": self.rate,
            "rate_se": self.rate_se,
            "prefactor": self.prefactor,
            "n_points": self.n_points,
            "x": list(self.x),
            "y": list(self.y),
            "sigma": list(self.sigma),
        }


@dataclass(frozen=True, eq=False)
class CollapseReport:
    """Sup-distances between scaled P_max curves and the common-tail fit."""

    ds: tuple
    excluded: tuple
    grid: np.ndarray
    densities: tuple
    pairwise_sup: tuple  # ((d1, d2, sup), ...) for consecutive d
    tail_window: tuple
    tail_amplitude: float


def _survey_task(args) -> tuple:
    """One batch of the survey: returns (du_counts, n_marginal, n_redrawn, du, max_mod).

    Samples whose transmission block is too ill-conditioned to convert
    are redrawn from the same stream and counted.
    """
    d, seed, task_index, n, tol, cond_max, keep = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, task_index]))
    du = np.empty(n, dtype=np.int64)
    max_mod = np.empty(n)
    filled = 0
    n_redrawn = 0
    n_marginal = 0
    while filled < n:
        todo = n - filled
        mats = haar_sample(rng, d, todo)
        vals, ok = transfer_spectra_batch(mats, cond_max=cond_max)
        good = int(np.count_nonzero(ok))
        n_redrawn += todo - good
        if good == 0:
            continue
        du_b, mm_b, marg_b = du_from_spectra(vals[ok], tol=tol)
        du[filled:filled + good] = du_b
        max_mod[filled:filled + good] = mm_b
        n_marginal += int(np.count_nonzero(marg_b))
        filled += good
    counts = np.bincount(du, minlength=d + 1)
    if not keep:
        du = max_mod = None
    return counts, n_marginal, n_redrawn, du, max_mod


def _run_survey(d: int, n_samples: int, seed: int, batch: int, workers,
                tol: float, cond_max: float, keep: bool, start_index: int = 0):
    # Cap the per-task batch so the Ginibre/QR working set stays modest at
    # large d.  The cap depends only on (d, batch), never on the worker
    # count, so the work partition and RNG streams are parallelism-proof.
    batch = min(batch, max(2048, (1 << 21) // (d * d)))
    sizes = [batch] * (n_samples // batch)
    if n_samples % batch:
        sizes.append(n_samples % batch)
    args = [(d, seed, start_index + i, sz, tol, cond_max, keep)
            for i, sz in enumerate(sizes)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_survey_task, args))
    else:
        results = [_survey_task(a) for a in args]
    counts = np.zeros(d + 1, dtype=np.int64)
    n_marginal = 0
    n_redrawn = 0
    dus = []
    mods = []
    for c, m, r, du, mm in results:
        counts += c
        n_marginal += m
        n_redrawn += r
        if keep:
            dus.append(du)
            mods.append(mm)
    du_all = np.concatenate(dus) if keep else None
    mm_all = np.concatenate(mods) if keep else None
    return counts, n_marginal, n_redrawn, du_all, mm_all, start_index + len(sizes)


def _hits(counts: np.ndarray, d: int, set_id: str) -> int:
    name = canonical_set_id(set_id)
    if name == "ballistic":
        return int(counts[0])
    if name == "localised":
        return int(np.sum(counts[1:]))
    return int(counts[d])


def measure_estimate(d: int, set_id: str, n_samples: int, seed: int,
                     batch: int = 65536, workers=None, tol: float = TAU_SPEC,
                     cond_max: float = COND_MAX, z: float = 1.96) -> MeasureEstimate:
    """Haar-measure estimate of one spectral set at fixed sample size."""
    counts, n_marginal, n_redrawn, _, _, _ = _run_survey(
        d, n_samples, seed, batch, workers, tol, cond_max, keep=False)
    hits = _hits(counts, d, set_id)
    lo, hi = wilson_interval(hits, n_samples, z=z)
    return MeasureEstimate(set_id, d, n_samples, hits, hits / n_samples,
                           lo, hi, n_redrawn, n_marginal)


def measure_estimate_adaptive(d: int, set_id: str, seed: int,
                              rel_width: float = 0.2, n_cap: int = 10**7,
                              n_min: int = 10**4, batch: int = 65536,
                              workers=None, tol: float = TAU_SPEC,
                              cond_max: float = COND_MAX, z: float = 1.96) -> MeasureEstimate:
    """Grow the survey in doubling rounds until the Wilson interval is tight.

    Stops once the relative CI half-width drops below ``rel_width`` or the
    sample cap is reached.  The round schedule is fixed by the arguments,
    so the result does not depend on the worker count.
    """
    counts = np.zeros(d + 1, dtype=np.int64)
    n_marginal = n_redrawn = n_total = 0
    next_index = 0
    round_size = n_min
    while True:
        round_size = min(round_size, n_cap - n_total)
        c, m, r, _, _, next_index = _run_survey(
            d, round_size, seed, batch, workers, tol, cond_max,
            keep=False, start_index=next_index)
        counts += c
        n_marginal += m
        n_redrawn += r
        n_total += round_size
        hits = _hits(counts, d, set_id)
        lo, hi = wilson_interval(hits, n_total, z=z)
        if hits > 0 and (hi - lo) / 2.0 <= rel_width * hits / n_total:
            break
        if n_total >= n_cap:
            break
        round_size = n_total  # double the total each round
    hits = _hits(counts, d, set_id)
    lo, hi = wilson_interval(hits, n_total, z=z)
    return MeasureEstimate(set_id, d, n_total, hits, hits / n_total,
                           lo, hi, n_redrawn, n_marginal)


def fit_measure_scaling(estimates, model: str) -> FitResult:
    """Weighted least squares of -log(measure) against the model's x(d).

    Weights follow from the Wilson intervals by the delta method; points
    with zero hits cannot enter the log fit and are skipped.
    """
    if model == "total_localised":
        model = "totally_localised"
    if model not in ("ballistic", "totally_localised"):
        raise ValueError("model must be 'ballistic' or 'total_localised'")
    xs, ys, sig = [], [], []
    for est in estimates:
        if est.hits == 0:
            warnings.warn(
                f"dropping d={est.d}: zero hits, log-measure undefined", stacklevel=2)
            continue
        x = est.d * (est.d + 1) if model == "ballistic" else np.sqrt(est.d)
        p = est.estimate
        sigma_p = (est.ci_hi - est.ci_lo) / (2.0 * 1.96)
        xs.append(float(x))
        ys.append(float(-np.log(p)))
        sig.append(float(sigma_p / p))
    if len(xs) < 2:
        raise ValueError("need at least two usable points to fit")
    x = np.asarray(xs)
    y = np.asarray(ys)
    w = 1.0 / np.square(sig)
    design = np.stack([x, np.ones_like(x)], axis=1)
    cov = np.linalg.inv(design.T @ (design * w[:, None]))
    coef = cov @ (design.T @ (w * y))
    rate, intercept = float(coef[0]), float(coef[1])
    return FitResult(
        model=model,
        rate=rate,
        rate_se=float(np.sqrt(cov[0, 0])),
        prefactor=float(np.exp(-intercept)),
        n_points=len(xs),
        x=tuple(xs),
        y=tuple(ys),
        sigma=tuple(sig),
    )


def _pmax_edges(tail: np.ndarray, tol: float, bins_linear: int, bins_log: int) -> np.ndarray:
    """Linear bins through the bulk, logarithmic through the algebraic tail."""
    t_max = float(np.max(tail))
    split = float(np.quantile(tail, 0.9))
    lo = 1.0 + tol
    if split <= lo or t_max <= split:
        return np.linspace(lo, max(t_max, lo + 1e-6), bins_linear + bins_log + 1)
    lin = np.linspace(lo, split, bins_linear + 1)
    log = np.geomspace(split, t_max, bins_log + 1)[1:]
    return np.concatenate([lin, log])


def pmax_distribution(d: int, n_samples: int, seed: int, batch: int = 65536,
                      workers=None, bins_linear: int = 40, bins_log: int = 40,
                      tol: float = TAU_SPEC, cond_max: float = COND_MAX) -> EnsembleStats:
    """Distribution of the maximal transfer-eigenvalue modulus at fixed d.

    Ballistic samples contribute an exact point mass at t = 1; the
    remainder is binned linearly through the bulk and logarithmically
    through the t^-3 tail.
    """
    _, _, _, du, max_mod, _ = _run_survey(
        d, n_samples, seed, batch, workers, tol, cond_max, keep=True)
    vals = max_mod.copy()
    vals[du == 0] = 1.0
    tail = vals[vals > 1.0]
    if tail.size:
        edges = _pmax_edges(tail, tol, bins_linear, bins_log)
    else:
        edges = np.linspace(1.0, 2.0, bins_linear + bins_log + 1)
    return EnsembleStats.from_samples(vals, edges=edges, point_values=(1.0,))


def pu_distribution(d: int, n_samples: int, seed: int, batch: int = 65536,
                    workers=None, tol: float = TAU_SPEC,
                    cond_max: float = COND_MAX) -> EnsembleStats:
    """Distribution of the expanding-mode fraction d_u / d at fixed d."""
    _, _, _, du, _, _ = _run_survey(
        d, n_samples, seed, batch, workers, tol, cond_max, keep=True)
    edges = (np.arange(d + 2) - 0.5) / d
    return EnsembleStats.from_samples(du / d, edges=edges)


def tail_exponent(stats: EnsembleStats, window: tuple, min_count: int = 5) -> tuple:
    """Power-law exponent of the histogram density inside ``window``.

    Weighted least squares of log density against log t over the bins
    fully inside the window with at least ``min_count`` entries; returns
    (exponent, standard error).
    """
    centers = 0.5 * (stats.edges[:-1] + stats.edges[1:])
    dens = stats.density()
    keep = (stats.edges[:-1] >= window[0]) & (stats.edges[1:] <= window[1]) & (stats.counts >= min_count)
    if np.count_nonzero(keep) < 3:
        raise ValueError("too few populated bins inside the fit window")
    x = np.log(centers[keep])
    y = np.log(dens[keep])
    w = stats.counts[keep].astype(float)  # var(log density) ~ 1/count
    design = np.stack([x, np.ones_like(x)], axis=1)
    cov = np.linalg.inv(design.T @ (design * w[:, None]))
    coef = cov @ (design.T @ (w * y))
    return float(coef[0]), float(np.sqrt(cov[0, 0]))


def tail_amplitude(stats: EnsembleStats, d: int, window: tuple = (3.0, 10.0)) -> float:
    """Amplitude a of the scaled tail sqrt(d) P_max(sqrt(d) u) ~ a u^-3.

    Integrates the model over the window instead of binning: with
    p = P(u in window) the amplitude is p / int_window u^-3 du, using the
    raw samples kept in ``stats``.
    """
    if stats.samples is None:
        raise ValueError("raw samples were not kept")
    u = stats.samples / np.sqrt(d)
    frac = np.count_nonzero((u >= window[0]) & (u < window[1])) / stats.n_total
    integral = 0.5 * (window[0] ** -2 - window[1] ** -2)
    return float(frac / integral)


def scaling_collapse(stats_by_d, grid_points: int = 200,
                     tail_window: tuple = (3.0, 10.0)) -> CollapseReport:
    """Overlay the scaled P_max curves and measure how well they collapse.

    Takes ``[(d, EnsembleStats), ...]``; entries with d < 2 are excluded
    (the single-channel distribution does not obey the sqrt(d) scaling)
    and recorded in the report.  Each histogram is rescaled to the
    variable u = t / sqrt(d) with density multiplied by sqrt(d), and the
    step densities are compared on a common grid covering the shared
    support up to each curve's 99th percentile.
    """
    excluded = tuple(d for d, _ in stats_by_d if d < 2)
    kept = [(d, st) for d, st in stats_by_d if d >= 2]
    if len(kept) < 2:
        raise ValueError("need at least two usable channel numbers")
    kept.sort(key=lambda p: p[0])

    scaled = []
    lo = -np.inf
    hi = np.inf
    for d, st in kept:
        root = np.sqrt(d)
        edges_u = st.edges / root
        dens_u = st.density() * root
        mass = np.cumsum(st.counts) / max(1, np.sum(st.counts))
        idx99 = int(np.searchsorted(mass, 0.99))
        idx99 = min(idx99, len(edges_u) - 2)
        scaled.append((d, edges_u, dens_u))
        lo = max(lo, edges_u[0])
        hi = min(hi, edges_u[idx99 + 1])
    if hi <= lo:
        warnings.warn("rescaled supports do not overlap; collapse grid is empty", stacklevel=2)
        grid = np.empty(0)
    else:
        grid = np.linspace(lo, hi, grid_points + 2)[1:-1]

    densities = []
    for d, edges_u, dens_u in scaled:
        idx = np.clip(np.searchsorted(edges_u, grid, side="right") - 1, 0, len(dens_u) - 1)
        densities.append(dens_u[idx])
    sup = []
    if grid.size:
        for (d1, _, _), rho1, (d2, _, _), rho2 in zip(scaled[:-1], densities[:-1], scaled[1:], densities[1:]):
            sup.append((d1, d2, float(np.max(np.abs(rho1 - rho2)))))

    d_big, st_big = kept[-1]
    amp = tail_amplitude(st_big, d_big, window=tail_window)
    return CollapseReport(
        ds=tuple(d for d, _ in kept),
        excluded=excluded,
        grid=grid,
        densities=tuple(densities),
        pairwise_sup=tuple(sup),
        tail_window=tail_window,
        tail_amplitude=amp,
    )


def sample_with_label(d: int, label: str, seed: int, max_tries: int = 100000,
                      tol: float = TAU_SPEC) -> ScatteringMatrix:
    """Rejection-sample a Haar generator with the requested classification.

    ``label`` is a classification label (``ballistic``,
    ``partially_localised``, ``totally_localised``), a set id, or
    ``localised`` (= at least one eigenvalue off the circle).
    """
    if label != "partially_localised":
        label = canonical_set_id(label)
    sampler = HaarSampler(d, seed)
    for _ in range(max_tries):
        s = sampler.sample()
        try:
            c = classify(s, tol=tol)
        except ScatteringError:
            continue
        if c.label == label or (label == "localised" and c.d_u >= 1):
            return s
    raise RuntimeError(f"no {label!r} sample found in {max_tries} tries at d = {d}")
