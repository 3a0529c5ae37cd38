"""Dense complex linear algebra used throughout holodyn.

All matrices are plain ``numpy`` arrays of dtype ``complex128``. Functions
accept a single ``(N, N)`` matrix and, where noted, stacks of shape
``(..., N, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, DimensionError, NumericError

HERMITIAN_RTOL = 1e-12
ORTHONORMALITY_TOL = 1e-10
DEGENERACY_TOL = 1e-12


def dagger(m):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(m, -1, -2))


def _as_complex(m, name="matrix"):
    arr = np.asarray(m, dtype=complex)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} has non-finite entries")
    return arr


def _require_square(m, name="matrix"):
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")


def frobenius_norm(m) -> float:
    """sqrt(sum |m_ij|^2)."""
    arr = _as_complex(m).reshape(-1)
    scale = float(np.max(np.abs(arr))) if arr.size else 0.0
    if scale == 0.0:
        return 0.0
    # rescale so tiny entries do not underflow when squared
    return scale * float(np.linalg.norm(arr / scale))


def frobenius_norms(stack):
    """Per-matrix Frobenius norms of a ``(..., N, M)`` stack."""
    return np.sqrt(np.sum(np.abs(stack) ** 2, axis=(-2, -1)))


def hermitian_defect(m) -> float:
    return frobenius_norm(m - dagger(m))


def is_hermitian(m, rtol=HERMITIAN_RTOL) -> bool:
    arr = _as_complex(m)
    return hermitian_defect(arr) <= rtol * max(1.0, frobenius_norm(arr))


def hermitian_part(m):
    return 0.5 * (m + dagger(m))


def as_hermitian(m, rtol=HERMITIAN_RTOL, name="matrix"):
    """Validate ``m`` as a Hermitian matrix and return it as a complex array.

    Raises ``DimensionError`` if ``m`` is not square and ``ValueError``
    if ``||m - m^dagger||_F > rtol * max(1, ||m||_F)``.
    """
    arr = _as_complex(m, name)
    _require_square(arr, name)
    if not is_hermitian(arr, rtol):
        raise ValueError(f"{name} is not Hermitian (defect {hermitian_defect(arr):.3e})")
    return arr


def _structure(stack):
    """Return 'hermitian', 'antihermitian' or 'general' for a whole stack."""
    scale = np.maximum(1.0, frobenius_norms(stack))
    adj = dagger(stack)
    if np.all(frobenius_norms(stack - adj) <= HERMITIAN_RTOL * scale):
        return "hermitian"
    if np.all(frobenius_norms(stack + adj) <= HERMITIAN_RTOL * scale):
        return "antihermitian"
    return "general"


def _expm_hermitian(h):
    w, v = np.linalg.eigh(hermitian_part(h))
    out = (v * np.exp(w)[..., None, :]) @ dagger(v)
    return hermitian_part(out)


def _expm_antihermitian(a):
    # a = -i h with h = i a Hermitian
    w, v = np.linalg.eigh(hermitian_part(1j * a))
    return (v * np.exp(-1j * w)[..., None, :]) @ dagger(v)


def _expm_taylor(a, order=18):
    """Scaling and squaring with a truncated Taylor series."""
    norm = float(np.max(frobenius_norms(a))) if a.size else 0.0
    squarings = max(0, int(np.ceil(np.log2(norm / 0.25)))) if norm > 0.25 else 0
    a = a / 2.0**squarings
    eye = np.broadcast_to(np.eye(a.shape[-1], dtype=complex), a.shape)
    out = eye.copy()
    term = eye.copy()
    for k in range(1, order + 1):
        term = term @ a / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def matrix_exponential(generator):
    """Return ``exp(generator)``.

    Hermitian and anti-Hermitian inputs go through an eigendecomposition so
    the result is Hermitian positive definite or unitary to rounding. Other
    inputs use scaling and squaring. Stacks ``(..., N, N)`` are accepted
    as long as the whole stack shares one structure class.
    """
    a = _as_complex(generator, "generator")
    _require_square(a, "generator")
    kind = _structure(a)
    if kind == "hermitian":
        out = _expm_hermitian(a)
    elif kind == "antihermitian":
        out = _expm_antihermitian(a)
    else:
        out = _expm_taylor(a)
    if not np.all(np.isfinite(out)):
        raise NumericError("matrix exponential overflowed")
    return out


def isometry_defect(v, source, target):
    """Return ``(||v^dagger v - source||_F, ||v v^dagger - target||_F)``."""
    v = _as_complex(v, "v")
    source = _as_complex(source, "source")
    target = _as_complex(target, "target")
    if v.ndim != 2 or source.shape != (v.shape[1],) * 2 or target.shape != (v.shape[0],) * 2:
        raise DimensionError(
            f"isometry_defect: shapes {v.shape}, {source.shape}, {target.shape} do not conform"
        )
    vh = dagger(v)
    return frobenius_norm(vh @ v - source), frobenius_norm(v @ vh - target)


def gram_defect(columns) -> float:
    g = dagger(columns) @ columns
    return frobenius_norm(g - np.eye(g.shape[-1]))


@dataclass(frozen=True, eq=False)
class Frame:
    """An ordered orthonormal set of ``rank`` column vectors in C^dim."""

    columns: np.ndarray
    tol: float = ORTHONORMALITY_TOL

    def __post_init__(self):
        cols = _as_complex(self.columns, "frame")
        if cols.ndim == 1:
            cols = cols[:, None]
        if cols.ndim != 2 or cols.shape[1] < 1 or cols.shape[1] > cols.shape[0]:
            raise DimensionError(f"frame must be N x l with 1 <= l <= N, got {cols.shape}")
        defect = gram_defect(cols)
        if defect > self.tol:
            raise DegeneracyError(f"frame Gram defect {defect:.3e} exceeds {self.tol:.1e}")
        cols.setflags(write=False)
        object.__setattr__(self, "columns", cols)

    @property
    def dim(self) -> int:
        return self.columns.shape[0]

    @property
    def rank(self) -> int:
        return self.columns.shape[1]

    @property
    def gram_defect(self) -> float:
        return gram_defect(self.columns)

    def projector(self):
        return hermitian_part(self.columns @ dagger(self.columns))


def lowdin(columns):
    """Symmetric orthonormalization ``C (C^dagger C)^{-1/2}`` of raw columns.

    Raises ``DegeneracyError`` when the smallest singular value of ``C`` is
    below 1e-12.
    """
    c = _as_complex(columns, "columns")
    if c.ndim == 1:
        c = c[:, None]
    if c.ndim != 2 or c.shape[1] > c.shape[0] or c.shape[1] < 1:
        raise DimensionError(f"cannot orthonormalize columns of shape {c.shape}")
    # SVD gives the polar factor directly: C = X S Y^dagger -> X Y^dagger
    x, s, yh = np.linalg.svd(c, full_matrices=False)
    if s[-1] < DEGENERACY_TOL:
        raise DegeneracyError(f"columns are rank deficient (smallest singular value {s[-1]:.3e})")
    return x @ yh


def reorthonormalize(f):
    """Return the Loewdin-orthonormalized copy of a frame (or raw columns)."""
    cols = f.columns if isinstance(f, Frame) else f
    return Frame(lowdin(cols))


def seeded_random_unitary(dim: int, seed: int):
    """Haar-distributed unitary from numpy's PCG64 stream seeded with ``seed``.

    QR of a complex Gaussian matrix, with the phases of R's diagonal folded
    back into Q so the distribution is Haar.
    """
    if dim < 1:
        raise DimensionError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))[None, :]


def random_hermitian(rng, dim: int, scale: float = 1.0):
    """(G + G^dagger)/2 for a complex Gaussian G drawn from ``rng``."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * hermitian_part(g)


def polar_isometry(w, rank: int, rtol: float = 1e-8):
    """Partial-isometry factor of ``w`` restricted to its top ``rank`` singular values.

    Raises ``DegeneracyError`` if the numerical rank of ``w`` differs from
    ``rank``.
    """
    x, s, yh = np.linalg.svd(w)
    numerical_rank = int(np.sum(s > rtol * max(s[0], 1.0)))
    if numerical_rank != rank:
        raise DegeneracyError(f"expected rank {rank}, found {numerical_rank}")
    return x[:, :rank] @ yh[:rank, :]


@dataclass(frozen=True, eq=False)
class PartialIsometry:
    """An N x N matrix together with the projectors it is meant to connect."""

    matrix: np.ndarray
    source_projector: np.ndarray
    target_projector: np.ndarray

    @property
    def defect(self):
        return isometry_defect(self.matrix, self.source_projector, self.target_projector)
