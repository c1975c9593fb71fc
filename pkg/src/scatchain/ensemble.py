"""Accumulators and interval estimates for Monte Carlo ensembles.

The central object is :class:`EnsembleStats`, a histogram plus running
moment sums.  Instances merge associatively, so ensembles accumulated
in deterministic task order give identical results no matter how the
work was split across processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EnsembleStats",
    "wilson_interval",
    "moment_summary",
    "MomentSummary",
]


def wilson_interval(hits: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Well-behaved for hits = 0 and hits = n, where the naive normal
    interval collapses; width shrinks like 1/sqrt(n).
    """
    if n <= 0:
        raise ValueError("need n > 0")
    if not 0 <= hits <= n:
        raise ValueError("need 0 <= hits <= n")
    p = hits / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1.0 - p) / n + z2 / (4 * n * n)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


@dataclass(frozen=True)
class MomentSummary:
    """Sample moments with asymptotic (influence-function) standard errors."""

    n: int
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    skewness: float
    skewness_se: float


def moment_summary(values: np.ndarray) -> MomentSummary:
    """Mean, variance (ddof=1) and skewness of a sample, with standard errors.

    The standard errors come from the influence functions of the three
    statistics evaluated on the empirical distribution, so they stay
    honest for non-normal data.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 4:
        raise ValueError("need at least 4 samples")
    mu = float(np.mean(x))
    c = x - mu
    m2 = float(np.mean(c**2))
    m3 = float(np.mean(c**3))
    var = m2 * n / (n - 1)
    skew = m3 / m2**1.5 if m2 > 0 else 0.0

    mean_se = float(np.sqrt(m2 / n))
    if_var = c**2 - m2
    var_se = float(np.sqrt(np.mean(if_var**2) / n))
    if m2 > 0:
        if_skew = (c**3 - m3 - 3.0 * m2 * c) / m2**1.5 - 1.5 * (m3 / m2**2.5) * (c**2 - m2)
        skew_se = float(np.sqrt(np.mean(if_skew**2) / n))
    else:
        skew_se = 0.0
    return MomentSummary(n, mu, mean_se, var, var_se, skew, skew_se)


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Histogram plus running moments of a scalar Monte Carlo sample.

    Holds bin ``edges`` and ``counts`` over the finite samples, the raw
    power sums needed for mean/variance/skewness, optional point masses
    (exact repeated values kept out of the histogram), and optionally the
    raw sample array itself.  Non-finite samples are tallied separately
    in ``n_nonfinite``.
    """

    edges: np.ndarray
    counts: np.ndarray
    n_total: int
    n_finite: int
    n_nonfinite: int
    sum_x: float
    sum_x2: float
    sum_x3: float
    point_masses: dict = field(default_factory=dict)
    samples: np.ndarray | None = None

    @classmethod
    def from_samples(cls, values, bins=60, edges=None, point_values=(),
                     keep_samples: bool = True) -> "EnsembleStats":
        """Build the accumulator from raw samples.

        ``point_values`` lists sample values to pull out of the histogram
        into exact point masses (e.g. a delta contribution at a boundary).
        ``edges`` overrides the automatic ``bins`` equal-width layout.
        """
        x = np.asarray(values, dtype=float).ravel()
        finite = x[np.isfinite(x)]
        n_nonfinite = x.size - finite.size
        point_masses = {}
        rest = finite
        for pv in point_values:
            hit = rest == pv
            cnt = int(np.count_nonzero(hit))
            if cnt:
                point_masses[float(pv)] = cnt
                rest = rest[~hit]
        if edges is None:
            if rest.size:
                lo, hi = float(np.min(rest)), float(np.max(rest))
                if lo == hi:
                    lo, hi = lo - 0.5, hi + 0.5
            else:
                lo, hi = 0.0, 1.0
            edges = np.linspace(lo, hi, int(bins) + 1)
        else:
            edges = np.asarray(edges, dtype=float)
        counts, _ = np.histogram(rest, bins=edges)
        return cls(
            edges=edges,
            counts=counts.astype(np.int64),
            n_total=int(x.size),
            n_finite=int(finite.size),
            n_nonfinite=int(n_nonfinite),
            sum_x=float(np.sum(finite)),
            sum_x2=float(np.sum(finite**2)),
            sum_x3=float(np.sum(finite**3)),
            point_masses=point_masses,
            samples=x if keep_samples else None,
        )

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        """Combine two accumulators over the same bin edges."""
        if self.edges.shape != other.edges.shape or not np.array_equal(self.edges, other.edges):
            raise ValueError("cannot merge: bin edges differ")
        pm = dict(self.point_masses)
        for k, v in other.point_masses.items():
            pm[k] = pm.get(k, 0) + v
        if self.samples is not None and other.samples is not None:
            samples = np.concatenate([self.samples, other.samples])
        else:
            samples = None
        return EnsembleStats(
            edges=self.edges,
            counts=self.counts + other.counts,
            n_total=self.n_total + other.n_total,
            n_finite=self.n_finite + other.n_finite,
            n_nonfinite=self.n_nonfinite + other.n_nonfinite,
            sum_x=self.sum_x + other.sum_x,
            sum_x2=self.sum_x2 + other.sum_x2,
            sum_x3=self.sum_x3 + other.sum_x3,
            point_masses=pm,
            samples=samples,
        )

    @property
    def mean(self) -> float:
        return self.sum_x / self.n_finite

    @property
    def variance(self) -> float:
        """Unbiased sample variance of the finite samples."""
        n = self.n_finite
        m = self.mean
        return (self.sum_x2 - n * m * m) / (n - 1)

    @property
    def skewness(self) -> float:
        n = self.n_finite
        m = self.mean
        m2 = self.sum_x2 / n - m * m
        m3 = self.sum_x3 / n - 3.0 * m * self.sum_x2 / n + 2.0 * m**3
        return m3 / m2**1.5 if m2 > 0 else 0.0

    def density(self) -> np.ndarray:
        """Histogram density over the finite, non-point samples.

        Normalised so that the histogram area plus the point and
        non-finite mass fractions sum to one over ``n_total``.
        """
        widths = np.diff(self.edges)
        return self.counts / (self.n_total * widths)

    def moment_summary(self) -> MomentSummary:
        if self.samples is None:
            raise ValueError("raw samples were not kept")
        finite = self.samples[np.isfinite(self.samples)]
        return moment_summary(finite)
