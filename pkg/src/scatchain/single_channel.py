"""Single-channel chains: the two-dimensional lengthening map and its statistics.

A 2 x 2 unitary scattering matrix is parametrised by a reflection
amplitude ``A``, transmission amplitude ``B = sqrt(1 - A^2)``, the left
reflection phase ``alpha_left`` and the two transmission phases
``beta_left``, ``beta_right``:

    S = [[ A e^{i alpha_left},  B e^{i beta_right} ],
         [ B e^{i beta_left},  -A e^{i (beta_left + beta_right - alpha_left)} ]]

Concatenating a chain with one more such scatterer reduces to a map of
the pair ``(A_n, chi_n)``, where ``chi_n = phi_n + alpha_left`` combines
the intrinsic chain phase ``phi_n = beta_left_n + beta_right_n -
alpha_left_n`` with the reflection phase of the generator.  For a fixed
generator the map is autonomous in ``(A_n, chi_n)``; its character is set
by the discriminant ``D = A^2 - sin^2(lambda)`` with
``lambda = (beta_left + beta_right) / 2``:

* ``D < 0``  ballistic motion around an elliptic fixed point, with the
  conserved quantity returned by :func:`integral_F`;
* ``D > 0``  exponential convergence to the perfectly reflecting
  attractor ``A = 1`` at rate ``log|kappa_1|`` per scatterer.

For disordered chains the same step is driven by freshly drawn generator
parameters; the decay rate ``I_n = log(B_n)/n`` then becomes normally
distributed with moments predicted by :func:`gaussian_prediction`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleStats
from .smatrix import ScatteringMatrix, ScatteringError

__all__ = [
    "MARGINAL_TOL",
    "DegenerateTransferError",
    "MarginalDiscriminantError",
    "SingleChannelParams",
    "ChainState1D",
    "FixedPointReport",
    "initial_state",
    "static_step",
    "noisy_step",
    "static_orbit",
    "discriminant",
    "eigenvalues_1d",
    "fixed_points",
    "integral_F",
    "integral_F_values",
    "log_f",
    "Dist",
    "DisorderModel",
    "GaussianPrediction",
    "decay_rate_series",
    "gaussian_prediction",
]

# Discriminants below this magnitude sit on the marginal manifold D = 0
# where the fixed-point structure degenerates.
MARGINAL_TOL = 1e-12

# Seed salts separating the random streams of the two statistical routines.
_SALT_SERIES = 0
_SALT_PREDICT = 1


class DegenerateTransferError(ScatteringError):
    """No transfer matrix exists for a perfect reflector (A = 1)."""


class MarginalDiscriminantError(ScatteringError):
    """The generator sits on the marginal manifold D = 0."""


@dataclass(frozen=True, eq=False)
class SingleChannelParams:
    """Parameters (A, alpha_left, beta_left, beta_right) of a 2 x 2 unitary.

    Fields may be floats or equally shaped arrays; derived quantities
    broadcast.  ``B`` and ``lam`` are always derived, so A^2 + B^2 = 1
    holds exactly.
    """

    A: float | np.ndarray
    alpha_left: float | np.ndarray
    beta_left: float | np.ndarray
    beta_right: float | np.ndarray

    def __post_init__(self):
        a = np.asarray(self.A)
        if np.any(a < 0.0) or np.any(a > 1.0):
            raise ValueError("reflection amplitude A must lie in [0, 1]")

    @property
    def B(self):
        return np.sqrt(np.maximum(0.0, 1.0 - np.square(self.A)))

    @property
    def lam(self):
        return 0.5 * (np.asarray(self.beta_left) + np.asarray(self.beta_right))

    @classmethod
    def from_transmission(cls, B, alpha_left, beta_left, beta_right) -> "SingleChannelParams":
        b = np.asarray(B)
        if np.any(b < 0.0) or np.any(b > 1.0):
            raise ValueError("transmission amplitude B must lie in [0, 1]")
        a = np.sqrt(np.maximum(0.0, 1.0 - np.square(b)))
        return cls(a, alpha_left, beta_left, beta_right)

    def to_smatrix(self) -> ScatteringMatrix:
        """Materialise the 2 x 2 unitary matrix (scalar parameters only)."""
        a = float(self.A)
        b = float(self.B)
        al = float(self.alpha_left)
        bl = float(self.beta_left)
        br = float(self.beta_right)
        mat = np.array(
            [
                [a * np.exp(1j * al), b * np.exp(1j * br)],
                [b * np.exp(1j * bl), -a * np.exp(1j * (bl + br - al))],
            ]
        )
        return ScatteringMatrix(mat)

    @classmethod
    def from_smatrix(cls, s: ScatteringMatrix, tol: float = 1e-12) -> "SingleChannelParams":
        """Extract the parameters of a single-channel scattering matrix.

        Phases carried by a vanishing amplitude are undefined and set to
        zero by convention.
        """
        if s.d != 1:
            raise ValueError(f"expected d = 1, got d = {s.d}")
        a = abs(s.mat[0, 0])
        b = abs(s.mat[1, 0])
        al = float(np.angle(s.mat[0, 0])) if a > tol else 0.0
        bl = float(np.angle(s.mat[1, 0])) if b > tol else 0.0
        br = float(np.angle(s.mat[0, 1])) if b > tol else 0.0
        return cls(min(a, 1.0), al, bl, br)


@dataclass(frozen=True, eq=False)
class ChainState1D:
    """State of a single-channel chain of ``n`` scatterers.

    ``phi = beta_left + beta_right - alpha_left`` is the intrinsic phase
    of the chain; the map variable chi additionally contains the
    reflection phase of the generator about to be attached,
    ``chi = phi + alpha_left(gen)``.  ``log_B`` tracks the transmission
    amplitude as an exact running sum, which keeps working long after
    ``exp(log_B)`` has underflowed and ``A`` has saturated at 1.

    Fields may be floats or arrays of a common shape (an ensemble of
    chains evolving in lockstep).
    """

    A: float | np.ndarray
    phi: float | np.ndarray
    beta_left: float | np.ndarray
    beta_right: float | np.ndarray
    log_B: float | np.ndarray
    n: int

    def chi(self, gen: SingleChannelParams):
        return self.phi + np.asarray(gen.alpha_left)

    @property
    def alpha_left(self):
        return np.asarray(self.beta_left) + np.asarray(self.beta_right) - self.phi

    @property
    def B(self):
        """Transmission amplitude from the running log (may underflow to 0)."""
        return np.exp(self.log_B)

    def to_smatrix(self) -> ScatteringMatrix:
        return SingleChannelParams(
            float(self.A), float(self.alpha_left),
            float(self.beta_left), float(self.beta_right),
        ).to_smatrix()


@dataclass(frozen=True)
class FixedPointReport:
    """Location and character of the fixed point of the static map."""

    kind: str  # "elliptic" or "attractor"
    A: float
    chi: float
    discriminant: float
    multiplier: float  # |kappa_1|; contraction rate per step for the attractor


def initial_state(gen: SingleChannelParams) -> ChainState1D:
    """Chain of length one, i.e. the generator itself."""
    with np.errstate(divide="ignore"):
        log_b = np.log(gen.B)
    return ChainState1D(
        A=np.asarray(gen.A, dtype=float) + 0.0,
        phi=np.asarray(gen.beta_left) + np.asarray(gen.beta_right) - np.asarray(gen.alpha_left),
        beta_left=np.asarray(gen.beta_left) + 0.0,
        beta_right=np.asarray(gen.beta_right) + 0.0,
        log_B=log_b,
        n=1,
    )


def _kernel(a_n, a_g, y):
    """Shared core of one lengthening step.

    Returns (A_next, arg c1, arg c2, log|c1|) for c1 = 1 + A_n A e^{-iy}
    and c2 = A_n + A e^{-iy}.  The corner c1 = 0 (two perfect reflectors
    in anti-phase) is continued radially: A stays 1 and the phase factors
    drop out.
    """
    ph = np.exp(-1j * np.asarray(y, dtype=float))
    c1 = 1.0 + a_n * a_g * ph
    c2 = a_n + a_g * ph
    m1 = np.abs(c1)
    dead = m1 == 0.0
    safe = np.where(dead, 1.0, m1)
    a_next = np.minimum(np.abs(c2) / safe, 1.0)
    a_next = np.where(dead, 1.0, a_next)
    arg1 = np.where(dead, 0.0, np.angle(c1))
    arg2 = np.where(dead, 0.0, np.angle(c2))
    return a_next, arg1, arg2, np.log(safe)


def _advance(state: ChainState1D, gen: SingleChannelParams) -> ChainState1D:
    y = state.phi + np.asarray(gen.alpha_left)
    lam = gen.lam
    a_next, arg1, arg2, log_m1 = _kernel(np.asarray(state.A), np.asarray(gen.A), y)
    with np.errstate(divide="ignore"):
        log_b_gen = np.log(gen.B)
    return ChainState1D(
        A=a_next,
        phi=state.phi + 2.0 * lam + arg1 + arg2,
        beta_left=state.beta_left + np.asarray(gen.beta_left) + arg1,
        beta_right=state.beta_right + np.asarray(gen.beta_right) + arg1,
        log_B=state.log_B + log_b_gen - log_m1,
        n=state.n + 1,
    )


def static_step(state: ChainState1D, gen: SingleChannelParams) -> ChainState1D:
    """Attach one more copy of the fixed generator to the chain."""
    return _advance(state, gen)


def noisy_step(state: ChainState1D, gen: SingleChannelParams) -> ChainState1D:
    """Attach a freshly drawn scatterer; same map, per-step parameters."""
    return _advance(state, gen)


def static_orbit(gen: SingleChannelParams, a0, chi0, n_steps: int):
    """Iterate the reduced (A, chi) map from the given initial conditions.

    ``a0`` and ``chi0`` may be arrays of initial conditions; returns two
    arrays of shape ``(n_steps + 1,) + shape(a0)``.
    """
    a = np.asarray(a0, dtype=float)
    chi = np.asarray(chi0, dtype=float)
    lam = float(gen.lam)
    a_g = float(gen.A)
    a_traj = np.empty((n_steps + 1,) + a.shape)
    c_traj = np.empty((n_steps + 1,) + a.shape)
    a_traj[0] = a
    c_traj[0] = chi
    for k in range(n_steps):
        a, arg1, arg2, _ = _kernel(a, a_g, chi)
        chi = chi + 2.0 * lam + arg1 + arg2
        a_traj[k + 1] = a
        c_traj[k + 1] = chi
    return a_traj, c_traj


def discriminant(gen: SingleChannelParams) -> float:
    """D = A^2 - sin^2(lambda); negative means ballistic, positive localised."""
    return float(np.square(gen.A) - np.square(np.sin(gen.lam)))


def eigenvalues_1d(gen: SingleChannelParams) -> tuple[complex, complex]:
    """Transfer-matrix eigenvalues (kappa_1, kappa_2), ordered |k1| <= |k2|.

    Both eigenvalues carry the common phase e^{i (beta_left - beta_right)/2},
    fixed by det T = e^{i (beta_left - beta_right)}; their product has unit
    modulus.  For D < 0 they form a conjugate pair up to that phase and lie
    on the unit circle.
    """
    a = float(gen.A)
    if a >= 1.0:
        raise DegenerateTransferError("A = 1 carries no transmission; the transfer matrix does not exist")
    b = float(gen.B)
    lam = float(gen.lam)
    d = a * a - np.sin(lam) ** 2
    root = np.sqrt(complex(d))
    pre = np.exp(0.5j * (float(gen.beta_left) - float(gen.beta_right))) / b
    k_minus = pre * (np.cos(lam) - root)
    k_plus = pre * (np.cos(lam) + root)
    if abs(k_minus) <= abs(k_plus):
        return complex(k_minus), complex(k_plus)
    return complex(k_plus), complex(k_minus)


def _reduce_angle(x):
    return np.mod(np.asarray(x) + np.pi, 2.0 * np.pi) - np.pi


def fixed_points(gen: SingleChannelParams, marginal_tol: float = MARGINAL_TOL) -> FixedPointReport:
    """Fixed point of the static (A, chi) map for the given generator.

    Ballistic generators (D < 0) have a unique elliptic fixed point

        A_e = |u| - sqrt(u^2 - 1),  u = sin(lambda)/A,

    with chi_e the representative of lambda + pi/2 + m pi lying in the
    half of the circle where cos(chi_e) < 0.  Localised generators
    (D > 0) have the globally attracting point

        A_a = 1,  chi_a = lambda + arg(i u + sqrt(1 - u^2)),

    approached as |kappa_1|^n.  On the marginal manifold |D| <= tol the
    two merge and :class:`MarginalDiscriminantError` is raised.  A pure
    transmitter (A = 0) is ballistic with the invariant circle shrunk to
    the centre A = 0; chi is then immaterial and reported as nan.
    """
    d = discriminant(gen)
    if abs(d) <= marginal_tol:
        raise MarginalDiscriminantError(f"discriminant {d:.3e} is within {marginal_tol:.1e} of zero")
    a = float(gen.A)
    lam = float(gen.lam)
    if d < 0.0:
        if a == 0.0:
            return FixedPointReport("elliptic", 0.0, float("nan"), d, 1.0)
        u = np.sin(lam) / a
        a_e = abs(u) - np.sqrt(u * u - 1.0)
        candidates = {round(float(_reduce_angle(lam + np.pi / 2.0 + m * np.pi)), 12) for m in (-1, 0, 1)}
        good = []
        for chi_e in sorted(candidates):
            if abs(chi_e) <= np.pi / 2.0:
                continue
            a1, g1, g2, _ = _kernel(a_e, a, chi_e)
            dchi = _reduce_angle(2.0 * lam + g1 + g2)
            if abs(a1 - a_e) < 1e-9 and abs(dchi) < 1e-9:
                good.append(float(chi_e))
        if len(good) != 1:
            raise RuntimeError(
                f"elliptic fixed point did not isolate cleanly (candidates: {good})")
        return FixedPointReport("elliptic", float(a_e), good[0], d, 1.0)
    u = np.sin(lam) / a
    chi_a = lam + np.angle(1j * u + np.sqrt(1.0 - u * u))
    kappa1, _ = eigenvalues_1d(gen)
    return FixedPointReport("attractor", 1.0, float(chi_a), d, abs(kappa1))


def integral_F_values(a, chi, gen: SingleChannelParams):
    """Conserved quantity of the ballistic map evaluated at (A, chi) points.

    F = (sin(lambda) + A_n A sin(lambda - chi_n)) / (1 - A_n^2); raises
    ZeroDivisionError on the perfectly reflecting line A_n = 1 where F
    has a pole.
    """
    a = np.asarray(a, dtype=float)
    if np.any(a >= 1.0):
        raise ZeroDivisionError("F is singular on the perfect-reflection line A = 1")
    lam = gen.lam
    return (np.sin(lam) + a * np.asarray(gen.A) * np.sin(lam - np.asarray(chi))) / (1.0 - np.square(a))


def integral_F(state: ChainState1D, gen: SingleChannelParams):
    """F evaluated on a chain state, with chi taken against ``gen``."""
    return integral_F_values(state.A, state.chi(gen), gen)


def log_f(b, y):
    """log of the strong-disorder contraction factor f(B, y).

    f(x, y) = x / sqrt(1 + 2 sqrt(1-x^2) cos y + (1-x^2)); the log of the
    per-step transmission loss when the chain is already nearly opaque.
    B = 0 maps to -inf.
    """
    b = np.asarray(b, dtype=float)
    a = np.sqrt(np.maximum(0.0, 1.0 - np.square(b)))
    with np.errstate(divide="ignore"):
        return np.log(b) - 0.5 * np.log1p(2.0 * a * np.cos(y) + a * a)


@dataclass(frozen=True)
class Dist:
    """A scalar sampling distribution: constant or uniform on [lo, hi]."""

    kind: str
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in ("const", "uniform"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.hi < self.lo:
            raise ValueError("hi must be >= lo")

    @classmethod
    def const(cls, value: float) -> "Dist":
        return cls("const", float(value), float(value))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "Dist":
        return cls("uniform", float(lo), float(hi))

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == "const":
            return self.lo if size is None else np.full(size, self.lo)
        return rng.uniform(self.lo, self.hi, size)

    def to_json(self) -> dict:
        if self.kind == "const":
            return {"dist": "const", "value": self.lo}
        return {"dist": "uniform", "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_json(cls, spec: dict) -> "Dist":
        kind = spec.get("dist")
        if kind == "const":
            return cls.const(spec["value"])
        if kind == "uniform":
            return cls.uniform(spec["lo"], spec["hi"])
        raise ValueError(f"unknown distribution kind {kind!r}")


@dataclass(frozen=True)
class DisorderModel:
    """Distributions of the generator parameters of a random chain.

    The amplitude is specified either through A (``a_dist``) or through
    B (``b_dist``), never both.  Reproducibility contract: chain ``j``
    of an ensemble uses the generator stream
    ``SeedSequence([seed, salt, j])`` and draws its whole parameter
    sequence as three arrays in the fixed order amplitude, lambda,
    alpha_left.  This makes results independent of chunking and of the
    degree of parallelism.
    """

    lam_dist: Dist
    alpha_dist: Dist
    seed: int
    a_dist: Dist | None = None
    b_dist: Dist | None = None

    def __post_init__(self):
        if (self.a_dist is None) == (self.b_dist is None):
            raise ValueError("specify exactly one of a_dist / b_dist")
        amp = self.a_dist if self.a_dist is not None else self.b_dist
        if amp.lo < 0.0 or amp.hi > 1.0:
            raise ValueError("amplitude distribution must be supported in [0, 1]")

    def sample_params(self, rng: np.random.Generator, size) -> tuple:
        """Draw (A, B, lam, alpha_left) arrays for ``size`` generators."""
        if self.a_dist is not None:
            a = np.asarray(self.a_dist.sample(rng, size), dtype=float)
            b = np.sqrt(np.maximum(0.0, 1.0 - a * a))
        else:
            b = np.asarray(self.b_dist.sample(rng, size), dtype=float)
            a = np.sqrt(np.maximum(0.0, 1.0 - b * b))
        lam = np.asarray(self.lam_dist.sample(rng, size), dtype=float)
        alpha = np.asarray(self.alpha_dist.sample(rng, size), dtype=float)
        return a, b, lam, alpha

    def chain_stream(self, j: int, salt: int = _SALT_SERIES) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, salt, j]))

    def to_json(self) -> dict:
        out = {
            "lambda": self.lam_dist.to_json(),
            "alpha_L": self.alpha_dist.to_json(),
            "seed": self.seed,
        }
        if self.a_dist is not None:
            out["A"] = self.a_dist.to_json()
        else:
            out["B"] = self.b_dist.to_json()
        return out

    @classmethod
    def from_json(cls, spec: dict) -> "DisorderModel":
        if ("A" in spec) == ("B" in spec):
            raise ValueError("config must contain exactly one of 'A' / 'B'")
        kwargs = {
            "lam_dist": Dist.from_json(spec["lambda"]),
            "alpha_dist": Dist.from_json(spec["alpha_L"]),
            "seed": int(spec["seed"]),
        }
        if "A" in spec:
            kwargs["a_dist"] = Dist.from_json(spec["A"])
        else:
            kwargs["b_dist"] = Dist.from_json(spec["B"])
        return cls(**kwargs)


def _evolve_chunk(model: DisorderModel, n: int, chain_ids: np.ndarray, mode: str) -> np.ndarray:
    """Final log B_n for the given chain ids, evolved in lockstep."""
    m = len(chain_ids)
    a = np.empty((n, m))
    b = np.empty((n, m))
    lam = np.empty((n, m))
    alpha = np.empty((n, m))
    for col, j in enumerate(chain_ids):
        rng = model.chain_stream(int(j))
        a[:, col], b[:, col], lam[:, col], alpha[:, col] = model.sample_params(rng, n)

    with np.errstate(divide="ignore"):
        log_b = np.log(b[0])
    if mode == "full":
        a_n = a[0].copy()
        phi = 2.0 * lam[0] - alpha[0]
        for k in range(1, n):
            y = phi + alpha[k]
            a_n, arg1, arg2, log_m1 = _kernel(a_n, a[k], y)
            phi = phi + 2.0 * lam[k] + arg1 + arg2
            with np.errstate(divide="ignore"):
                log_b += np.log(b[k]) - log_m1
    elif mode == "approx":
        phi = 2.0 * lam[0] - alpha[0]
        for k in range(1, n):
            y = phi + alpha[k]
            lf = log_f(b[k], y)
            ph = np.exp(-1j * y)
            phi = phi + 2.0 * lam[k] + 2.0 * np.angle(1.0 + a[k] * ph)
            log_b += lf
    else:
        raise ValueError(f"mode must be 'full' or 'approx', got {mode!r}")
    return log_b


def decay_rate_series(model: DisorderModel, n: int, ensemble: int,
                      mode: str = "full", bins: int = 60,
                      chunk: int = 4096) -> EnsembleStats:
    """Empirical distribution of the decay rate I_n = log(B_n)/n.

    Evolves ``ensemble`` independent chains of ``n`` scatterers drawn
    from ``model`` and aggregates the per-chain rates.  ``mode="full"``
    uses the exact lengthening map; ``mode="approx"`` the strong-disorder
    product form.  Chains with zero transmission contribute mass at
    I = -inf, reported through ``n_nonfinite`` of the result.
    """
    if n < 1 or ensemble < 1:
        raise ValueError("need n >= 1 and ensemble >= 1")
    if n < 50:
        warnings.warn(f"n = {n} is short; the Gaussian regime needs n >> 1", stacklevel=2)
    rates = np.empty(ensemble)
    for start in range(0, ensemble, chunk):
        ids = np.arange(start, min(start + chunk, ensemble))
        rates[ids] = _evolve_chunk(model, n, ids, mode) / n
    return EnsembleStats.from_samples(rates, bins=bins)


@dataclass(frozen=True)
class GaussianPrediction:
    """Predicted moments of the asymptotic decay-rate distribution.

    The prediction P_n(I) is normal with mean ``mean`` and variance
    ``variance / n``.  Two independent walker groups estimate the
    moments; ``converged`` is False when they disagree beyond three
    combined standard errors.
    """

    mean: float
    variance: float
    mean_se: float
    variance_se: float
    converged: bool
    group_means: tuple[float, float]
    group_variances: tuple[float, float]
    n_samples: int
    burn_in: int

    def distribution(self, n: int):
        """Frozen normal distribution of I_n at chain length ``n``."""
        from scipy import stats

        return stats.norm(loc=self.mean, scale=np.sqrt(self.variance / n))


def gaussian_prediction(model: DisorderModel, burn_in: int = 1000,
                        samples: int = 100000, walkers: int = 32) -> GaussianPrediction:
    """Moments of log f over the stationary phase density.

    Runs two independent groups of lockstep phase walkers through the
    strong-disorder map, discards ``burn_in`` steps per walker, and
    averages log f over the remaining ``samples`` draws per group.  The
    walker-to-walker scatter provides the standard errors.
    """
    if burn_in < 0 or samples < walkers:
        raise ValueError("need burn_in >= 0 and samples >= walkers")
    steps = int(np.ceil(samples / walkers))
    group_mean = []
    group_var = []
    group_se = []
    group_var_se = []
    for g in range(2):
        rng = np.random.default_rng(np.random.SeedSequence([model.seed, _SALT_PREDICT, g]))
        total = burn_in + steps
        a, b, lam, alpha = model.sample_params(rng, (total, walkers))
        phi = np.zeros(walkers)
        m1 = np.zeros(walkers)
        m2 = np.zeros(walkers)
        for k in range(total):
            y = phi + alpha[k]
            if k >= burn_in:
                lf = log_f(b[k], y)
                m1 += lf
                m2 += lf * lf
            phi = phi + 2.0 * lam[k] + 2.0 * np.angle(1.0 + a[k] * np.exp(-1j * y))
        m1 /= steps
        m2 /= steps
        mean_g = float(np.mean(m1))
        var_g = float(np.mean(m2) - mean_g**2)
        group_mean.append(mean_g)
        group_var.append(var_g)
        group_se.append(float(np.std(m1, ddof=1) / np.sqrt(walkers)))
        v_w = m2 - m1 * m1
        group_var_se.append(float(np.std(v_w, ddof=1) / np.sqrt(walkers)))

    mean = 0.5 * (group_mean[0] + group_mean[1])
    variance = 0.5 * (group_var[0] + group_var[1])
    se_pair = np.hypot(group_se[0], group_se[1])
    var_se_pair = np.hypot(group_var_se[0], group_var_se[1])
    converged = bool(
        abs(group_mean[0] - group_mean[1]) <= 3.0 * se_pair
        and abs(group_var[0] - group_var[1]) <= 3.0 * var_se_pair
    )
    if not converged:
        warnings.warn("independent phase chains disagree beyond 3 standard errors", stacklevel=2)
    return GaussianPrediction(
        mean=mean,
        variance=variance,
        mean_se=float(se_pair / 2.0),
        variance_se=float(var_se_pair / 2.0),
        converged=converged,
        group_means=(group_mean[0], group_mean[1]),
        group_variances=(group_var[0], group_var[1]),
        n_samples=2 * walkers * steps,
        burn_in=burn_in,
    )
