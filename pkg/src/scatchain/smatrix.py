"""Scattering- and transfer-matrix algebra for linear chains of scatterers.

A scatterer coupling two leads with ``d`` channels each is described by a
``2d x 2d`` unitary scattering matrix stored in reflection/transmission
blocks,

    S = [[r_left,  t_right],
         [t_left,  r_right]]

which maps incoming amplitudes ``(from the left, from the right)`` to
outgoing ones.  The equivalent transfer matrix

    T = [[x1, x2],
         [x3, x4]]

propagates the amplitudes on the left of the scatterer to those on its
right and is pseudo-unitary with respect to ``K = diag(1, -1)`` (block
form): ``T^+ K T = T K T^+ = K``.

Chains are grown with :func:`compose`, the associative concatenation
product of scattering matrices.  It stays on the compact unitary manifold,
so round-off does not accumulate exponentially the way it does for
repeated transfer-matrix multiplication; transfer matrices are still the
right tool for spectral questions, hence the converters :func:`s_to_t`
and :func:`t_to_s`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TAU_UNITARY",
    "TAU_ROUNDTRIP",
    "COND_MAX",
    "ScatteringError",
    "ChannelMismatchError",
    "SingularBlockError",
    "ResonantCavityError",
    "UnitarityError",
    "ScatteringMatrix",
    "TransferMatrix",
    "TransportStats",
    "validate",
    "unitarity_residual",
    "pseudo_unitarity_residual",
    "s_to_t",
    "t_to_s",
    "compose",
    "transport",
    "unitarize",
    "perfect_transmitter",
    "k_matrix",
    "save_matrix",
    "load_matrix",
]

# Default tolerances: unitarity / pseudo-unitarity residuals, round-trip
# conversion error, and the condition-number ceiling past which a block
# inversion is refused.
TAU_UNITARY = 1e-9
TAU_ROUNDTRIP = 1e-10
COND_MAX = 1e12


class ScatteringError(Exception):
    """Base class for scattering-algebra failures."""


class ChannelMismatchError(ScatteringError):
    """Operands act on different channel numbers."""


class SingularBlockError(ScatteringError):
    """A block inversion was requested on an ill-conditioned block."""

    def __init__(self, block: str, rcond: float):
        self.block = block
        self.rcond = rcond
        super().__init__(
            f"block {block!r} has reciprocal condition {rcond:.3e}; "
            f"refusing to invert"
        )


class ResonantCavityError(ScatteringError):
    """The concatenation cavity factor 1 - r r' is numerically singular."""


class UnitarityError(ScatteringError):
    """A matrix failed its unitarity check."""


def _as_square_complex(mat, ctx: str) -> np.ndarray:
    m = np.array(mat, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ChannelMismatchError(f"{ctx}: expected a square matrix, got shape {m.shape}")
    if m.shape[0] % 2 != 0 or m.shape[0] == 0:
        raise ChannelMismatchError(f"{ctx}: side must be even and positive, got {m.shape[0]}")
    m.flags.writeable = False
    return m


@dataclass(frozen=True, eq=False)
class ScatteringMatrix:
    """Unitary 2d x 2d scattering matrix in r/t block order.

    The storage convention is fixed: left reflection in the upper-left
    block, right-to-left transmission upper-right, left-to-right
    transmission lower-left, right reflection lower-right.
    """

    mat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mat", _as_square_complex(self.mat, "ScatteringMatrix"))

    @property
    def d(self) -> int:
        """Channels per lead."""
        return self.mat.shape[0] // 2

    @property
    def r_left(self) -> np.ndarray:
        return self.mat[: self.d, : self.d]

    @property
    def t_right(self) -> np.ndarray:
        return self.mat[: self.d, self.d :]

    @property
    def t_left(self) -> np.ndarray:
        return self.mat[self.d :, : self.d]

    @property
    def r_right(self) -> np.ndarray:
        return self.mat[self.d :, self.d :]

    @classmethod
    def from_blocks(cls, r_left, t_right, t_left, r_right) -> "ScatteringMatrix":
        blocks = [np.atleast_2d(np.asarray(b, dtype=complex)) for b in (r_left, t_right, t_left, r_right)]
        d = blocks[0].shape[0]
        if any(b.shape != (d, d) for b in blocks):
            raise ChannelMismatchError("from_blocks: all four blocks must be d x d")
        return cls(np.block([[blocks[0], blocks[1]], [blocks[2], blocks[3]]]))


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    """Pseudo-unitary 2d x 2d transfer matrix in x1..x4 block order."""

    mat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mat", _as_square_complex(self.mat, "TransferMatrix"))

    @property
    def d(self) -> int:
        return self.mat.shape[0] // 2

    @property
    def x1(self) -> np.ndarray:
        return self.mat[: self.d, : self.d]

    @property
    def x2(self) -> np.ndarray:
        return self.mat[: self.d, self.d :]

    @property
    def x3(self) -> np.ndarray:
        return self.mat[self.d :, : self.d]

    @property
    def x4(self) -> np.ndarray:
        return self.mat[self.d :, self.d :]


@dataclass(frozen=True)
class TransportStats:
    """Channel-averaged transport coefficients of one scattering matrix.

    ``sigma2`` is the isotropic single-channel variance
    (<Pi^2> - R^2) / (d + 1), identical for the reflection and
    transmission eigenvalue ensembles.
    """

    t_avg: float
    r_avg: float
    sigma2: float


def k_matrix(d: int) -> np.ndarray:
    """Signature matrix K = diag(1_d, -1_d) of the pseudo-unitary group."""
    return np.diag(np.concatenate([np.ones(d), -np.ones(d)]))


def unitarity_residual(s: ScatteringMatrix) -> float:
    """Max-norm distance of S^+ S from the identity."""
    m = s.mat
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))


def pseudo_unitarity_residual(t: TransferMatrix) -> float:
    """Max-norm violation of T^+ K T = K and T K T^+ = K, whichever is worse."""
    k = k_matrix(t.d)
    m = t.mat
    r1 = np.max(np.abs(m.conj().T @ k @ m - k))
    r2 = np.max(np.abs(m @ k @ m.conj().T - k))
    return float(max(r1, r2))


def validate(s: ScatteringMatrix, tol: float = TAU_UNITARY) -> bool:
    """True when the unitarity residual of ``s`` is within ``tol``."""
    return unitarity_residual(s) <= tol


def _rcond(m: np.ndarray) -> float:
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[0] == 0.0:
        return 0.0
    return float(sv[-1] / sv[0])


def s_to_t(s: ScatteringMatrix, cond_max: float = COND_MAX) -> TransferMatrix:
    """Convert a scattering matrix to the equivalent transfer matrix.

    Requires the right-to-left transmission block to be invertible; a
    reciprocal condition number below ``1/cond_max`` raises
    :class:`SingularBlockError`.
    """
    tr = s.t_right
    rc = _rcond(tr)
    if rc < 1.0 / cond_max:
        raise SingularBlockError("t_right", rc)
    d = s.d
    eye = np.eye(d)
    x4 = np.linalg.solve(tr, eye)
    x3 = -x4 @ s.r_left
    x2 = s.r_right @ x4
    x1 = s.t_left + s.r_right @ x3
    return TransferMatrix(np.block([[x1, x2], [x3, x4]]))


def t_to_s(t: TransferMatrix, cond_max: float = COND_MAX) -> ScatteringMatrix:
    """Convert a transfer matrix back to the scattering representation.

    The inverse of :func:`s_to_t`; needs an invertible x4 block.
    """
    x4 = t.x4
    rc = _rcond(x4)
    if rc < 1.0 / cond_max:
        raise SingularBlockError("x4", rc)
    d = t.d
    eye = np.eye(d)
    t_right = np.linalg.solve(x4, eye)
    r_left = -t_right @ t.x3
    t_left = t.x1 + t.x2 @ r_left
    r_right = t.x2 @ t_right
    return ScatteringMatrix(np.block([[r_left, t_right], [t_left, r_right]]))


def compose(chain: ScatteringMatrix, gen: ScatteringMatrix,
            cond_max: float = COND_MAX, project: bool = False) -> ScatteringMatrix:
    """Concatenation product: the chain ``chain`` extended by ``gen`` on the right.

    Evaluates the star product of the two scattering matrices by
    eliminating the amplitudes in the gap.  The cavity factors
    ``1 - r_right(chain) r_left(gen)`` and ``1 - r_left(gen) r_right(chain)``
    must be invertible; on resonance (reciprocal condition below
    ``1/cond_max``) :class:`ResonantCavityError` is raised.

    With ``project=True`` the result is snapped back to the closest
    unitary matrix (polar projection) whenever its residual drifts past
    TAU_UNITARY / 10.  Off by default; the product itself preserves
    unitarity to machine precision per step.
    """
    if chain.d != gen.d:
        raise ChannelMismatchError(f"compose: d={chain.d} vs d={gen.d}")
    d = chain.d
    eye = np.eye(d)
    cav = eye - chain.r_right @ gen.r_left
    rc = _rcond(cav)
    if rc < 1.0 / cond_max:
        raise ResonantCavityError(
            f"cavity factor 1 - r_right r_left has reciprocal condition {rc:.3e}")
    cav_p = eye - gen.r_left @ chain.r_right

    v = np.linalg.solve(cav, chain.t_left)
    w = np.linalg.solve(cav_p, gen.t_right)

    r_left = chain.r_left + chain.t_right @ gen.r_left @ v
    t_left = gen.t_left @ v
    t_right = chain.t_right @ w
    r_right = gen.r_right + gen.t_left @ chain.r_right @ w

    out = ScatteringMatrix(np.block([[r_left, t_right], [t_left, r_right]]))
    if project and unitarity_residual(out) > TAU_UNITARY / 10.0:
        out = unitarize(out)
    return out


def unitarize(s: ScatteringMatrix) -> ScatteringMatrix:
    """Closest unitary matrix in Frobenius norm (polar projection)."""
    u, _, vh = np.linalg.svd(s.mat)
    return ScatteringMatrix(u @ vh)


def transport(s: ScatteringMatrix, side: str = "left") -> TransportStats:
    """Channel-averaged transmission, reflection and their shared variance.

    The averages are <.> = tr{.}/d over the reflection probability
    operator Pi = r^+ r of the requested ``side``; T follows from exact
    flux conservation T = 1 - R.  For a unitary matrix the left and
    right values of sigma2 coincide (the two Pi share a spectrum).
    """
    if side == "left":
        r = s.r_left
    elif side == "right":
        r = s.r_right
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    d = s.d
    pi = r.conj().T @ r
    r_avg = float(np.trace(pi).real) / d
    pi2_avg = float(np.trace(pi @ pi).real) / d
    sigma2 = (pi2_avg - r_avg**2) / (d + 1)
    return TransportStats(t_avg=1.0 - r_avg, r_avg=r_avg, sigma2=sigma2)


def perfect_transmitter(d: int) -> ScatteringMatrix:
    """The identity element of concatenation: no reflection, unit transmission."""
    z = np.zeros((d, d))
    e = np.eye(d)
    return ScatteringMatrix.from_blocks(z, e, e, z)


def save_matrix(s: ScatteringMatrix, path) -> None:
    """Write a scattering matrix as JSON.

    Schema: ``{"d": channels, "re": [[...]], "im": [[...]]}`` for the full
    2d x 2d array in the block order documented on
    :class:`ScatteringMatrix` (r_left upper-left).
    """
    payload = {
        "d": s.d,
        "re": s.mat.real.tolist(),
        "im": s.mat.imag.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_matrix(path, tol: float = TAU_UNITARY) -> tuple[ScatteringMatrix, float]:
    """Read a scattering matrix written by :func:`save_matrix`.

    Returns the matrix together with its unitarity residual; a residual
    beyond ``tol`` raises :class:`UnitarityError`.
    """
    with open(path) as fh:
        payload = json.load(fh)
    mat = np.asarray(payload["re"], dtype=float) + 1j * np.asarray(payload["im"], dtype=float)
    if mat.shape != (2 * payload["d"], 2 * payload["d"]):
        raise ChannelMismatchError(
            f"file {path}: declared d={payload['d']} but matrix shape is {mat.shape}")
    s = ScatteringMatrix(mat)
    res = unitarity_residual(s)
    if res > tol:
        raise UnitarityError(f"file {path}: unitarity residual {res:.3e} exceeds {tol:.1e}")
    return s, res
