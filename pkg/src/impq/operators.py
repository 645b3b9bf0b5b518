"""Dense complex operator substrate.

Everything downstream works on ``numpy`` complex128 arrays wrapped in a few
certified value types (:class:`HermitianOperator`, :class:`Projector`,
:class:`DensityMatrix`).  Wrapped arrays are marked read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

HERM_TOL = 1e-10
IDEM_TOL = 1e-10
PSD_TOL = 1e-10
TRACE_TOL = 1e-10
EIG_TOL = 1e-11
PINV_TOL = 1e-10
BORN_TOL = 1e-10
# eigenvalues of a candidate projector must sit this close to {0, 1}
SNAP_TOL = 1e-8

MASK64 = (1 << 64) - 1


class OperatorError(ValueError):
    """Base class for rejected operator inputs."""


class DimensionError(OperatorError):
    pass


class HermitianError(OperatorError):
    def __init__(self, message: str, norm: float):
        super().__init__(f"{message} (||M - M^H||_max = {norm:.3e})")
        self.norm = norm


class ProjectorError(OperatorError):
    pass


class DensityError(OperatorError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128, copy=True)
    a.flags.writeable = False
    return a


def as_matrix(a) -> np.ndarray:
    """Coerce ``a`` to a finite square complex128 array (a fresh copy)."""
    m = np.array(a, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise DimensionError(f"expected a nonempty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise OperatorError("matrix has non-finite entries")
    return m


def _raw(a) -> np.ndarray:
    if isinstance(a, (HermitianOperator, Projector, DensityMatrix)):
        return a.matrix
    return np.asarray(a, dtype=np.complex128)


def max_abs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def hermitian_part(a) -> np.ndarray:
    a = _raw(a)
    return (a + a.conj().T) / 2


def commutator(a, b) -> np.ndarray:
    a, b = _raw(a), _raw(b)
    return a @ b - b @ a


def check_same_dim(*ops) -> int:
    dims = {_raw(o).shape[0] for o in ops}
    if len(dims) != 1:
        raise DimensionError(f"dimension mismatch: {sorted(dims)}")
    return dims.pop()


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix)
        norm = max_abs(m - m.conj().T)
        if norm > HERM_TOL:
            raise HermitianError("operator is not Hermitian", norm)
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    @classmethod
    def symmetrized(cls, a) -> "HermitianOperator":
        """Hermitian part of ``a``; use only where ``a`` is Hermitian up to rounding."""
        return cls(hermitian_part(as_matrix(a)))


@dataclass(frozen=True, eq=False)
class Projector:
    """Orthogonal projector with its rank.

    Direct construction validates ``matrix`` at ``IDEM_TOL``; use
    :meth:`snap` to certify a matrix that is a projector only up to
    accumulated rounding.
    """

    matrix: np.ndarray
    rank: int = -1

    def __post_init__(self):
        m = as_matrix(self.matrix)
        herm = max_abs(m - m.conj().T)
        if herm > HERM_TOL:
            raise ProjectorError(f"projector is not Hermitian: residual {herm:.3e}")
        idem = max_abs(m @ m - m)
        if idem > IDEM_TOL:
            raise ProjectorError(f"projector is not idempotent: ||P^2 - P||_max = {idem:.3e}")
        rank = int(round(np.trace(m).real))
        if self.rank >= 0 and self.rank != rank:
            raise ProjectorError(f"declared rank {self.rank} but trace gives {rank}")
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "rank", rank)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    @classmethod
    def snap(cls, a, tol: float = SNAP_TOL) -> "Projector":
        """Rebuild ``a`` as an exact projector from its eigenvectors.

        Eigenvalues above 1/2 become 1, the rest 0.  Any eigenvalue farther
        than ``tol`` from {0, 1} means ``a`` is not a projector at all.
        """
        m = hermitian_part(as_matrix(a))
        w, v = np.linalg.eigh(m)
        dist = np.minimum(np.abs(w), np.abs(w - 1.0))
        if dist.size and dist.max() > tol:
            raise ProjectorError(
                f"eigenvalue {w[np.argmax(dist)]:.3e} is {dist.max():.3e} away from {{0, 1}}"
            )
        basis = v[:, w > 0.5]
        return cls(basis @ basis.conj().T, basis.shape[1])

    @classmethod
    def zero(cls, dim: int) -> "Projector":
        return cls(np.zeros((dim, dim)), 0)

    @classmethod
    def identity(cls, dim: int) -> "Projector":
        return cls(np.eye(dim), dim)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix)
        herm = max_abs(m - m.conj().T)
        if herm > HERM_TOL:
            raise DensityError(f"density matrix is not Hermitian: residual {herm:.3e}")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise DensityError(f"trace {tr!r} differs from 1")
        lam = np.linalg.eigvalsh(hermitian_part(m))[0]
        if lam < -PSD_TOL:
            raise DensityError(f"negative eigenvalue {lam:.3e}")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def hermitian_eigensystem(h) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (columns) of ``h``."""
    m = as_matrix(_raw(h))
    norm = max_abs(m - m.conj().T)
    if norm > HERM_TOL:
        raise HermitianError("hermitian_eigensystem needs a Hermitian input", norm)
    return np.linalg.eigh(hermitian_part(m))


def pseudo_inverse(m, rank_rtol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse by SVD.

    Singular values below ``rank_rtol * sigma_max`` are treated as zero;
    the default ``rank_rtol`` is ``dim * eps``.
    """
    m = as_matrix(_raw(m))
    n = m.shape[0]
    if rank_rtol is None:
        rank_rtol = n * np.finfo(float).eps
    u, s, vh = np.linalg.svd(m)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros_like(m)
    keep = s > rank_rtol * s[0]
    return (vh[keep].conj().T / s[keep]) @ u[:, keep].conj().T


def moore_penrose_residuals(m, m_pinv) -> dict[str, float]:
    m, x = _raw(m), _raw(m_pinv)
    mx, xm = m @ x, x @ m
    return {
        "m_x_m": max_abs(mx @ m - m),
        "x_m_x": max_abs(xm @ x - x),
        "mx_hermitian": max_abs(mx - mx.conj().T),
        "xm_hermitian": max_abs(xm - xm.conj().T),
    }


def min_eigenvalue(a) -> float:
    return float(np.linalg.eigvalsh(hermitian_part(a))[0])


def loewner_leq(a, b, tol: float = 1e-9) -> bool:
    """True iff ``b - a`` is positive semidefinite up to ``tol``."""
    check_same_dim(a, b)
    return min_eigenvalue(_raw(b) - _raw(a)) >= -tol


def orthonormal_basis(vectors, rtol: float | None = None) -> np.ndarray:
    """Orthonormal basis (columns) for the span of the given columns."""
    v = np.asarray(vectors, dtype=np.complex128)
    if v.ndim == 1:
        v = v[:, None]
    u, s, _ = np.linalg.svd(v, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return u[:, :0]
    if rtol is None:
        rtol = max(v.shape) * np.finfo(float).eps
    return u[:, s > rtol * s[0]]


def projector_from_columns(vectors: Sequence[Sequence[complex]] | np.ndarray) -> Projector:
    """Projector onto the span of ``vectors`` (a list of equal-length vectors)."""
    vs = [np.asarray(x, dtype=np.complex128).ravel() for x in vectors]
    if not vs:
        raise ProjectorError("need at least one vector")
    if len({x.size for x in vs}) != 1:
        raise DimensionError("vectors have different lengths")
    basis = orthonormal_basis(np.stack(vs, axis=1))
    if basis.shape[1] == 0:
        raise ProjectorError("input vectors span the zero subspace")
    return Projector(basis @ basis.conj().T, basis.shape[1])


def projector_from_basis(basis: np.ndarray) -> Projector:
    """Projector ``V V^H`` for a matrix ``V`` with orthonormal columns (may have none)."""
    basis = np.asarray(basis, dtype=np.complex128)
    return Projector(basis @ basis.conj().T, basis.shape[1])


def derive_seed(master: int, *keys: int) -> int:
    """64-bit seed for ``keys`` under ``master``.

    Uses numpy's ``SeedSequence`` with ``keys`` as spawn key, so a sample's seed
    depends only on (master, keys) and never on how many samples came before.
    """
    ss = np.random.SeedSequence(int(master) & MASK64, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(int(seed) & MASK64)


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def haar_unitary(dim: int, seed) -> np.ndarray:
    """Haar-distributed unitary: QR of a Ginibre matrix, R's diagonal phases removed."""
    rng = make_rng(seed)
    z = complex_gaussian(rng, (dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def haar_random_projector(dim: int, rank: int, seed) -> Projector:
    if dim < 1:
        raise DimensionError("dim must be positive")
    if not 0 <= rank <= dim:
        raise ProjectorError(f"rank {rank} outside [0, {dim}]")
    u = haar_unitary(dim, seed)
    return projector_from_basis(u[:, :rank])


def random_density(dim: int, rank: int, seed) -> DensityMatrix:
    if not 1 <= rank <= dim:
        raise DensityError(f"rank {rank} outside [1, {dim}]")
    g = complex_gaussian(make_rng(seed), (dim, rank))
    rho = g @ g.conj().T
    rho = hermitian_part(rho / np.trace(rho).real)
    return DensityMatrix(rho)


def born_expectation(rho, omega, return_residue: bool = False):
    """``Re tr(rho omega)``; optionally also the discarded imaginary part."""
    check_same_dim(rho, omega)
    value = np.trace(_raw(rho) @ _raw(omega))
    if return_residue:
        return float(value.real), float(abs(value.imag))
    return float(value.real)


def block_diag(*blocks) -> np.ndarray:
    """Block-diagonal matrix; zero-sized blocks are skipped."""
    blocks = [np.atleast_2d(np.asarray(b, dtype=np.complex128)) for b in blocks]
    blocks = [b for b in blocks if b.size]
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n), dtype=np.complex128)
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i:i + k, i:i + k] = b
        i += k
    return out


# -- matrix JSON -------------------------------------------------------------


class MatrixFormatError(OperatorError):
    pass


def matrix_to_json(m) -> dict:
    m = as_matrix(_raw(m))
    return {
        "dim": m.shape[0],
        "entries": [[[float(z.real), float(z.imag)] for z in row] for row in m],
    }


def matrix_from_json(doc) -> np.ndarray:
    if not isinstance(doc, dict):
        raise MatrixFormatError("top level must be an object")
    for key in ("dim", "entries"):
        if key not in doc:
            raise MatrixFormatError(f"missing key {key!r}")
    n = doc["dim"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise MatrixFormatError(f"dim must be a positive integer, got {n!r}")
    rows = doc["entries"]
    if not isinstance(rows, list) or len(rows) != n:
        raise MatrixFormatError(f"entries must be a list of {n} rows")
    out = np.empty((n, n), dtype=np.complex128)
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise MatrixFormatError(f"row {i} must have {n} entries (matrix must be square)")
        for j, z in enumerate(row):
            if (
                not isinstance(z, list)
                or len(z) != 2
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in z)
            ):
                raise MatrixFormatError(f"entry [{i}][{j}] must be a [re, im] pair of numbers")
            if not all(np.isfinite(x) for x in z):
                raise MatrixFormatError(f"entry [{i}][{j}] is not finite")
            out[i, j] = complex(z[0], z[1])
    return out


def stack_columns(vectors: Iterable[np.ndarray], dim: int) -> np.ndarray:
    cols = [np.asarray(v, dtype=np.complex128).reshape(dim, -1) for v in vectors]
    cols = [c for c in cols if c.shape[1]]
    if not cols:
        return np.zeros((dim, 0), dtype=np.complex128)
    return np.concatenate(cols, axis=1)
