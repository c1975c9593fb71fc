"""Multi-channel chains: transfer spectra, localisation classes, plateaus.

For a fixed generating scattering matrix the chain of length ``n`` has
transfer matrix ``T^n``, so everything about the lengthening dynamics is
encoded in the spectrum of ``T = T[S]``.  Pseudo-unitarity pairs every
eigenvalue ``kappa`` with ``1/conj(kappa)``; eigenvalues off the unit
circle therefore come in contracting/expanding pairs.  Counting the
expanding ones (``d_u``) classifies the generator:

* ``d_u = 0``        ballistic (quasi-periodic transmission),
* ``0 < d_u < d``    partially localised (decay to an oscillating plateau),
* ``d_u = d``        totally localised (transmission decays to zero).

The transmission of the length-n chain is carried by the lower-right
transfer block ``X_n``; splitting off the expanding directions of
``X_n`` gives the plateau value around which the transmission
oscillates, and whether the mixed projector blocks vanish decides the
approach exponent ``beta in {1, 2}`` of the decaying remainder.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .smatrix import (
    COND_MAX,
    ScatteringError,
    ScatteringMatrix,
    compose,
    k_matrix,
    s_to_t,
    transport,
    unitarity_residual,
)

__all__ = [
    "TAU_SPEC",
    "DEGENERACY_TOL",
    "SpectralClassification",
    "ChainTrace",
    "classify",
    "eigenvector_structure",
    "x_block_power",
    "plateau_transmission",
    "beta_exponent",
    "evolve_chain",
    "transfer_spectra_batch",
    "du_from_spectra",
]

# Relative width of the unit-circle band: |kappa| <= 1 + TAU_SPEC counts as
# on-circle.  DEGENERACY_TOL is the relative gap below which eigenvalues
# are treated as a degenerate cluster.
TAU_SPEC = 1e-8
DEGENERACY_TOL = 1e-6

# Eigenvector-matrix condition number beyond which the eigenproblem is
# flagged as (numerically) defective.
_DEFECTIVE_COND = 1e10


@dataclass(frozen=True, eq=False)
class SpectralClassification:
    """Transfer-matrix spectrum of a generator and what it implies.

    ``spectrum`` is sorted by decreasing modulus.  The eigenvector fields
    are None until filled in by :func:`eigenvector_structure`; they hold
    the upper/lower halves of the right eigenvectors (``alphas``,
    ``betas``) and of the dual left basis ``W = inv(V)^+`` (``zetas``,
    ``etas``), as d x 2d column stacks aligned with ``spectrum``.
    """

    d: int
    spectrum: np.ndarray
    d_u: int
    label: str
    decay_rate: float
    ev_condition: float
    defective: bool
    k_indices: tuple = ()
    degenerate: bool = False
    alphas: np.ndarray | None = None
    betas: np.ndarray | None = None
    zetas: np.ndarray | None = None
    etas: np.ndarray | None = None
    knorm: np.ndarray | None = None

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "spectrum_re": [float(v.real) for v in self.spectrum],
            "spectrum_im": [float(v.imag) for v in self.spectrum],
            "d_u": int(self.d_u),
            "label": self.label,
            "decay_rate": float(self.decay_rate),
            "ev_condition": float(self.ev_condition),
            "defective": bool(self.defective),
            "degenerate": bool(self.degenerate),
        }


@dataclass(frozen=True, eq=False)
class ChainTrace:
    """Recorded transmission history of a translationally invariant chain.

    The analysis fields are filled for localised generators: the plateau
    level with its oscillation band estimated over the trailing window,
    the fitted envelope rate of the decaying part of T_n, and the
    predicted approach exponent beta.
    """

    n: np.ndarray
    t_avg: np.ndarray
    r_avg: np.ndarray
    residual: np.ndarray
    classification: SpectralClassification
    plateau: float | None = None
    plateau_band: tuple | None = None
    plateau_series: np.ndarray | None = None
    decay_rate_fit: float | None = None
    beta: int | None = None


def _label(d: int, d_u: int) -> str:
    if d_u == 0:
        return "ballistic"
    if d_u == d:
        return "totally_localised"
    return "partially_localised"


def classify(s: ScatteringMatrix, tol: float = TAU_SPEC) -> SpectralClassification:
    """Classify a generator by its transfer-matrix spectrum.

    Eigenvalues with ``|kappa| > 1 + tol`` count as expanding; the decay
    rate is ``log max|kappa|`` clamped at zero.  An ill-conditioned
    eigenvector matrix only sets the ``defective`` flag, the counting
    itself needs no eigenvectors.
    """
    t = s_to_t(s)
    vals, vecs = np.linalg.eig(t.mat)
    order = np.lexsort((np.angle(vals), -np.abs(vals)))
    vals = vals[order]
    mods = np.abs(vals)
    d_u = int(np.count_nonzero(mods > 1.0 + tol))
    cond = float(np.linalg.cond(vecs))
    gaps = np.abs(vals[:, None] - vals[None, :]) / np.maximum(mods[:, None], mods[None, :])
    np.fill_diagonal(gaps, np.inf)
    return SpectralClassification(
        d=s.d,
        spectrum=vals,
        d_u=d_u,
        label=_label(s.d, d_u),
        decay_rate=max(0.0, float(np.log(mods[0]))),
        ev_condition=cond,
        defective=cond > _DEFECTIVE_COND,
        k_indices=tuple(int(i) for i in np.nonzero(mods > 1.0 + tol)[0]),
        degenerate=bool(np.min(gaps) < DEGENERACY_TOL),
    )


def eigenvector_structure(s: ScatteringMatrix, tol: float = TAU_SPEC) -> SpectralClassification:
    """Classification enriched with the spectral decomposition of T.

    Columns ``i`` of the returned stacks satisfy ``T v_i = kappa_i v_i``
    and ``w_i^+ T = kappa_i w_i^+`` with ``w_i^+ v_j = delta_ij`` (the
    ``w_i`` are conjugates of the rows of ``inv(V)``, so the stored
    lower halves ``etas`` enter ``X_n = sum kappa_i^n betas_i etas_i^+``).
    """
    t = s_to_t(s)
    vals, vecs = np.linalg.eig(t.mat)
    order = np.lexsort((np.angle(vals), -np.abs(vals)))
    vals = vals[order]
    vecs = vecs[:, order]
    d = s.d
    cond = float(np.linalg.cond(vecs))
    w = np.linalg.inv(vecs).conj().T
    k = k_matrix(d)
    knorm = np.einsum("ji,jk,ki->i", vecs.conj(), k, vecs)
    mods = np.abs(vals)
    d_u = int(np.count_nonzero(mods > 1.0 + tol))
    gaps = np.abs(vals[:, None] - vals[None, :]) / np.maximum(mods[:, None], mods[None, :])
    np.fill_diagonal(gaps, np.inf)
    return SpectralClassification(
        d=d,
        spectrum=vals,
        d_u=d_u,
        label=_label(d, d_u),
        decay_rate=max(0.0, float(np.log(mods[0]))),
        ev_condition=cond,
        defective=cond > _DEFECTIVE_COND,
        k_indices=tuple(int(i) for i in np.nonzero(mods > 1.0 + tol)[0]),
        degenerate=bool(np.min(gaps) < DEGENERACY_TOL),
        alphas=vecs[:d, :],
        betas=vecs[d:, :],
        zetas=w[:d, :],
        etas=w[d:, :],
        knorm=knorm,
    )


def x_block_power(st: SpectralClassification, n: int, indices=None) -> np.ndarray:
    """Lower-right transfer block of the length-n chain from the mode sum.

    ``X_n = sum_i kappa_i^n betas_i etas_i^+`` restricted to ``indices``
    when given.  Expanding modes overflow for large n; restrict them away
    before asking for long chains.
    """
    if st.betas is None:
        raise ValueError("needs an eigenvector_structure result")
    idx = np.arange(2 * st.d) if indices is None else np.asarray(indices, dtype=int)
    powers = st.spectrum[idx] ** n
    return (st.betas[:, idx] * powers) @ st.etas[:, idx].conj().T


def _complement_basis(cols: np.ndarray, d: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the given columns."""
    if cols.shape[1] == 0:
        return np.eye(d)
    q = np.linalg.qr(cols, mode="complete")[0]
    return q[:, cols.shape[1]:]


def plateau_transmission(s_or_structure, n: int, normalized: bool = True,
                         tol: float = TAU_SPEC) -> float:
    """Non-decaying part of the chain transmission at length ``n``.

    Splits off the expanding directions of ``X_n``: with ``Q_L`` spanning
    the complement of the expanding ``betas`` and ``Q_R`` the complement
    of the expanding ``etas``, the plateau is

        T_0[S_n] = tr{ (Xc^+ Xc)^-1 } / d,   Xc = Q_L^+ X_n Q_R

    evaluated on the non-expanding modes only, which keeps the formula
    finite at any ``n``.  With ``normalized=False`` the trace is not
    divided by ``d``.  Totally localised generators return 0; for a
    ballistic generator nothing decays and the full transmission of the
    length-n chain is returned (degenerate use, warned about).
    """
    st = s_or_structure
    if isinstance(st, ScatteringMatrix):
        st = eigenvector_structure(st, tol)
    d = st.d
    k = len(st.k_indices)
    if k == d:
        return 0.0
    if k == 0:
        warnings.warn("plateau of a ballistic generator is the full transmission", stacklevel=2)
    rest = [i for i in range(2 * d) if i not in st.k_indices]
    q_l = _complement_basis(st.betas[:, list(st.k_indices)], d)
    q_r = _complement_basis(st.etas[:, list(st.k_indices)], d)
    powers = st.spectrum[rest] ** n
    core = (q_l.conj().T @ st.betas[:, rest] * powers) @ (st.etas[:, rest].conj().T @ q_r)
    gram = core.conj().T @ core
    try:
        inv_gram = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise ScatteringError(f"plateau block is singular at n = {n}") from exc
    value = float(np.trace(inv_gram).real)
    return value / d if normalized else value


def beta_exponent(st_or_s, ns=(1, 2, 3), rel_tol: float = 1e-8,
                  tol: float = TAU_SPEC) -> int:
    """Predicted approach exponent of T_n to its plateau: 2 or 1.

    The decaying remainder falls off as exp(-beta I n) with beta = 2
    when both mixed blocks of X_n vanish, i.e. the expanding column
    space and row space decouple exactly from their complements, and
    beta = 1 otherwise (the generic case).
    """
    st = st_or_s
    if isinstance(st, ScatteringMatrix):
        st = eigenvector_structure(st, tol)
    d = st.d
    k_idx = list(st.k_indices)
    if not k_idx or len(k_idx) == d:
        raise ValueError("approach exponent needs a partially localised generator")
    b_cols = st.betas[:, k_idx]
    e_cols = st.etas[:, k_idx]
    q_b = np.linalg.qr(b_cols)[0]
    q_e = np.linalg.qr(e_cols)[0]
    p_l = q_b @ q_b.conj().T
    p_r = q_e @ q_e.conj().T
    eye = np.eye(d)
    worst = 0.0
    for n in ns:
        x = x_block_power(st, n)
        scale = float(np.max(np.abs(x)))
        o1 = (eye - p_l) @ x @ p_r
        o2 = p_l @ x @ (eye - p_r)
        worst = max(worst, float(np.max(np.abs(o1))) / scale, float(np.max(np.abs(o2))) / scale)
    return 2 if worst < rel_tol else 1


def _envelope_fit(ns: np.ndarray, deltas: np.ndarray, block: int | None = None):
    """Envelope decay rate of an oscillating, exponentially falling series.

    Blocks consecutive points, takes the block maxima of |delta| and fits
    a line to their logs; returns the (negative) slope or None when too
    few usable points remain.  The series is truncated at the rounding
    floor first, and the block size adapts to the usable length so that
    short fast-decaying traces still produce enough envelope points.
    """
    deltas = np.abs(deltas)
    floor = max(1e-13, 1e-11 * float(np.max(deltas, initial=0.0)))
    below = deltas <= floor
    if below.any():
        cut = int(np.argmax(below))
        ns, deltas = ns[:cut], deltas[:cut]
    start = len(ns) // 5  # the first stretch mixes faster-decaying modes
    ns, deltas = ns[start:], deltas[start:]
    keep = deltas > 0.0
    ns = ns[keep]
    deltas = deltas[keep]
    if block is None:
        block = max(2, min(8, len(ns) // 6))
    nblocks = len(ns) // block
    if nblocks < 3:
        return None
    xs = np.empty(nblocks)
    ys = np.empty(nblocks)
    for i in range(nblocks):
        sl = slice(i * block, (i + 1) * block)
        j = int(np.argmax(deltas[sl]))
        xs[i] = ns[sl][j]
        ys[i] = np.log(deltas[sl][j])
    slope = np.polyfit(xs, ys, 1)[0]
    return float(-slope)


def evolve_chain(gen: ScatteringMatrix, n_max: int, record_every: int = 1,
                 project: bool = False, analyze: bool = True,
                 tail_frac: float = 0.25, cond_max: float = COND_MAX) -> ChainTrace:
    """Grow the translationally invariant chain and record its transport.

    Composes ``gen`` onto the chain ``n_max - 1`` times, recording the
    channel-averaged transmission/reflection and the unitarity residual
    every ``record_every`` steps.  For localised generators the plateau
    level, its oscillation band over the trailing ``tail_frac`` of the
    record, the envelope decay rate of T_n towards the plateau, and the
    predicted approach exponent are reported as well.
    """
    if n_max < 1:
        raise ValueError("need n_max >= 1")
    cls_ = classify(gen)
    ns, ts, rs, res = [], [], [], []
    s = gen
    for n in range(1, n_max + 1):
        if n > 1:
            s = compose(s, gen, cond_max=cond_max, project=project)
        if n % record_every == 0 or n == 1 or n == n_max:
            tr = transport(s)
            ns.append(n)
            ts.append(tr.t_avg)
            rs.append(tr.r_avg)
            res.append(unitarity_residual(s))
    ns = np.asarray(ns)
    ts = np.asarray(ts)
    rs = np.asarray(rs)
    res = np.asarray(res)

    plateau = band = series = rate = beta = None
    if analyze and cls_.d_u > 0:
        if cls_.d_u == cls_.d:
            series = np.zeros_like(ts)
            beta = 2
        else:
            st = eigenvector_structure(gen)
            series = np.array([plateau_transmission(st, int(n)) for n in ns])
            beta = beta_exponent(st)
        tail = max(2, int(len(ns) * (1.0 - tail_frac)))
        window = ts[tail:]
        plateau = float(np.mean(window))
        band = (float(np.min(window)), float(np.max(window)))
        delta = ts - series
        if cls_.d_u < cls_.d and np.any(np.abs(delta[tail:]) > 1e-6 * plateau):
            warnings.warn("decaying term not settled below 1e-6 in the plateau "
                          "window; increase n_max", stacklevel=2)
        rate = _envelope_fit(ns, delta)
    return ChainTrace(
        n=ns, t_avg=ts, r_avg=rs, residual=res, classification=cls_,
        plateau=plateau, plateau_band=band, plateau_series=series,
        decay_rate_fit=rate, beta=beta,
    )


def transfer_spectra_batch(smats: np.ndarray, cond_max: float = COND_MAX):
    """Transfer eigenvalues for a stack of scattering matrices.

    Returns ``(vals, ok)`` where ``vals`` has shape ``(N, 2d)`` and ``ok``
    flags samples whose t_right block was well-conditioned enough to
    convert; rows with ``ok=False`` hold garbage and must be discarded.
    """
    smats = np.asarray(smats)
    d = smats.shape[-1] // 2
    r_l = smats[:, :d, :d]
    t_r = smats[:, :d, d:]
    t_l = smats[:, d:, :d]
    r_r = smats[:, d:, d:]
    sv = np.linalg.svd(t_r, compute_uv=False)
    ok = sv[:, -1] * cond_max > sv[:, 0]
    safe = np.where(ok[:, None, None], t_r, np.eye(d))
    x4 = np.linalg.inv(safe)
    x3 = -x4 @ r_l
    t = np.empty(smats.shape, dtype=complex)
    t[:, :d, :d] = t_l + r_r @ x3
    t[:, :d, d:] = r_r @ x4
    t[:, d:, :d] = x3
    t[:, d:, d:] = x4
    return np.linalg.eigvals(t), ok


def du_from_spectra(vals: np.ndarray, tol: float = TAU_SPEC):
    """Expanding-eigenvalue counts and maximal moduli for stacked spectra.

    Returns ``(d_u, max_mod, marginal)``; ``marginal`` flags samples whose
    classification the tolerance band actually decided: some eigenvalue
    sits inside the band but clearly off the circle (well above rounding
    noise, which puts exactly-circular eigenvalues at ||kappa|-1| ~ 1e-14).
    """
    mods = np.abs(vals)
    d_u = np.count_nonzero(mods > 1.0 + tol, axis=1)
    max_mod = np.max(mods, axis=1)
    off = np.abs(mods - 1.0)
    marginal = np.any((off > 1e-12) & (off <= tol), axis=1)
    return d_u, max_mod, marginal
