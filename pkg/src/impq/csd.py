"""CS (two-subspace) decomposition of a pair of projectors.

For projectors ``P, Q`` there is a unitary ``U`` with

    U P U^H = dg[Phat, I, 0, I, 0]
    U Q U^H = dg[Qhat, I, I, 0, 0]

over the sectors ``[generic, m1, m2, m3, m4]`` where ``m1 = P^Q``,
``m2 = P'^Q``, ``m3 = P^Q'``, ``m4 = P'^Q'`` and on the ``2m``-dimensional
generic sector

    Phat = [[C^2, CS], [CS, S^2]],   Qhat = [[I, 0], [0, 0]].

Here ``C`` and ``S`` are diagonal with the cosines and sines of the principal
angles between the ranges, angles ascending.

The sectors are located from principal vectors (SVD of basis overlaps)
rather than from :func:`impq.lattice.meet`, so the ``cs_based`` lattice
route stays independent of the spectral one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import (
    OperatorError,
    Projector,
    block_diag,
    check_same_dim,
    matrix_to_json,
    max_abs,
    projector_from_basis,
)

SECTORS = ("generic", "m1", "m2", "m3", "m4")
ANGLE_FLOOR = 1e-6
CS_TOL = 1e-9


class CSDecompositionError(OperatorError):
    pass


@dataclass(frozen=True)
class CSSignature:
    m: int
    m1: int
    m2: int
    m3: int
    m4: int

    @property
    def dim(self) -> int:
        return 2 * self.m + self.m1 + self.m2 + self.m3 + self.m4

    def sizes(self) -> dict[str, int]:
        return {"generic": 2 * self.m, "m1": self.m1, "m2": self.m2, "m3": self.m3, "m4": self.m4}

    def offsets(self) -> dict[str, slice]:
        out, i = {}, 0
        for name, k in self.sizes().items():
            out[name] = slice(i, i + k)
            i += k
        return out

    def astuple(self) -> tuple[int, int, int, int, int]:
        return (self.m, self.m1, self.m2, self.m3, self.m4)


@dataclass(frozen=True, eq=False)
class CSDecomposition:
    U: np.ndarray
    signature: CSSignature
    C: np.ndarray
    S: np.ndarray

    @property
    def dim(self) -> int:
        return self.U.shape[0]

    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(np.diag(self.S).real, np.diag(self.C).real)

    @property
    def basis(self) -> np.ndarray:
        """Columns of ``U^H``: the CS basis vectors in sector order."""
        return self.U.conj().T

    def generic_blocks(self) -> tuple[np.ndarray, np.ndarray]:
        return generic_blocks(self.C, self.S)

    def sector_basis(self, name: str) -> np.ndarray:
        return self.basis[:, self.signature.offsets()[name]]

    def to_json(self) -> dict:
        m = self.signature.m
        return {
            "signature": dict(zip(("m", "m1", "m2", "m3", "m4"), self.signature.astuple())),
            "U": matrix_to_json(self.U),
            "C": matrix_to_json(self.C) if m else None,
            "S": matrix_to_json(self.S) if m else None,
        }


def generic_blocks(c: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(Phat, Qhat)`` built from the commuting ``C, S`` blocks."""
    m = c.shape[0]
    phat = np.block([[c @ c, c @ s], [c @ s, s @ s]])
    qhat = block_diag(np.eye(m), np.zeros((m, m)))
    return phat.astype(np.complex128), qhat


def _range_basis(p: Projector) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(p.matrix)
    return v[:, w > 0.5], v[:, w <= 0.5]


def _principal_split(pm: np.ndarray, a: np.ndarray, target: np.ndarray, floor: float):
    """Split ``range(target)`` by the angle each principal vector makes with ``range(P)``.

    Returns (near-zero-angle vectors, near-right-angle vectors, generic vectors,
    their cosines, their sines).
    """
    if target.shape[1] == 0:
        empty = target[:, :0]
        return empty, empty, empty, np.zeros(0), np.zeros(0)
    overlap = a.conj().T @ target
    _, _, zh = np.linalg.svd(overlap, full_matrices=True) if overlap.size else (None, None, np.eye(target.shape[1]))
    vecs = target @ zh.conj().T
    cos = np.linalg.norm(pm @ vecs, axis=0)
    sin = np.linalg.norm(vecs - pm @ vecs, axis=0)
    theta = np.arctan2(sin, cos)
    inside = theta < floor
    orth = theta > np.pi / 2 - floor
    gen = ~(inside | orth)
    order = np.argsort(theta[gen], kind="stable")
    return vecs[:, inside], vecs[:, orth], vecs[:, gen][:, order], cos[gen][order], sin[gen][order]


def cs_decompose(p: Projector, q: Projector, tol: float = CS_TOL,
                 angle_floor: float = ANGLE_FLOOR) -> CSDecomposition:
    n = check_same_dim(p, q)
    pm, qm = p.matrix, q.matrix
    a, _ = _range_basis(p)
    b, b_perp = _range_basis(q)

    s1, s2, e, cos, sin = _principal_split(pm, a, b, angle_floor)
    s3, s4, f_check, _, _ = _principal_split(pm, a, b_perp, angle_floor)
    m = e.shape[1]
    if f_check.shape[1] != m:
        raise CSDecompositionError(
            f"generic sector has odd dimension ({m} + {f_check.shape[1]}); "
            "inputs are not projectors within tolerance"
        )
    # partner of each Q-side principal vector inside range(Q)^perp
    f = (pm @ e - e * cos**2) / (cos * sin) if m else e[:, :0]

    basis = np.concatenate([e, f, s1, s2, s3, s4], axis=1)
    u = basis.conj().T
    unit_res = max_abs(u @ u.conj().T - np.eye(n))
    if basis.shape[1] != n or unit_res > tol:
        raise CSDecompositionError(
            f"sector bases are not orthonormal (columns {basis.shape[1]}/{n}, residual {unit_res:.3e})"
        )
    sig = CSSignature(m, s1.shape[1], s2.shape[1], s3.shape[1], s4.shape[1])
    return CSDecomposition(u, sig, np.diag(cos).astype(np.complex128), np.diag(sin).astype(np.complex128))


def canonical_blocks(dec: CSDecomposition) -> tuple[np.ndarray, np.ndarray]:
    """``dg[Phat, I, 0, I, 0]`` and ``dg[Qhat, I, I, 0, 0]`` in the CS basis."""
    sig = dec.signature
    phat, qhat = dec.generic_blocks()
    eye, zero = np.eye, np.zeros
    pc = block_diag(phat, eye(sig.m1), zero((sig.m2, sig.m2)), eye(sig.m3), zero((sig.m4, sig.m4)))
    qc = block_diag(qhat, eye(sig.m1), eye(sig.m2), zero((sig.m3, sig.m3)), zero((sig.m4, sig.m4)))
    return pc, qc


def to_original(dec: CSDecomposition, block: np.ndarray) -> np.ndarray:
    return dec.U.conj().T @ block @ dec.U


def to_cs(dec: CSDecomposition, op) -> np.ndarray:
    return dec.U @ np.asarray(op) @ dec.U.conj().T


def reconstruct(dec: CSDecomposition) -> tuple[Projector, Projector]:
    pc, qc = canonical_blocks(dec)
    return Projector.snap(to_original(dec, pc)), Projector.snap(to_original(dec, qc))


def reconstruction_residual(dec: CSDecomposition, p: Projector, q: Projector) -> float:
    pc, qc = canonical_blocks(dec)
    return max(max_abs(to_original(dec, pc) - p.matrix), max_abs(to_original(dec, qc) - q.matrix))


def sector_projector(dec: CSDecomposition, name: str) -> Projector:
    """Projector onto one CS sector, in the original basis."""
    return projector_from_basis(dec.sector_basis(name))


def decomposition_residuals(dec: CSDecomposition, p: Projector, q: Projector) -> dict[str, float]:
    """Residuals of every structural invariant of ``dec`` against its inputs."""
    c, s = dec.C, dec.S
    m = dec.signature.m
    pc, qc = canonical_blocks(dec)
    res = {
        "unitarity": max_abs(dec.U.conj().T @ dec.U - np.eye(dec.dim)),
        "cs_pythagoras": max_abs(c @ c + s @ s - np.eye(m)) if m else 0.0,
        "cs_commute": max_abs(c @ s - s @ c) if m else 0.0,
        "block_form_p": max_abs(to_cs(dec, p.matrix) - pc),
        "block_form_q": max_abs(to_cs(dec, q.matrix) - qc),
    }
    return res


def generic_relations_check(dec: CSDecomposition, tol: float = 1e-9) -> dict:
    """Join is the identity, meet is zero and both traces equal ``m`` on the generic block."""
    from .lattice import join, meet

    m = dec.signature.m
    if m == 0:
        return {"vacuous": True, "passed": True, "residuals": {}}
    phat, qhat = dec.generic_blocks()
    ph, qh = Projector.snap(phat), Projector(qhat)
    res = {
        "join_is_identity": max_abs(join(ph, qh).matrix - np.eye(2 * m)),
        "meet_is_zero": max_abs(meet(ph, qh).matrix),
        "trace_p": abs(np.trace(phat).real - m),
        "trace_q": abs(np.trace(qhat).real - m),
    }
    return {"vacuous": False, "passed": max(res.values()) <= tol, "residuals": res}


def canonical_imprecise(dec: CSDecomposition) -> tuple[np.ndarray, np.ndarray]:
    """Upper and lower probability operators of the pair, in the CS basis."""
    sig = dec.signature
    phat, qhat = dec.generic_blocks()
    d = phat - qhat
    rest = sig.m2 + sig.m3 + sig.m4
    upper = block_diag(np.eye(2 * sig.m) - d @ d, np.eye(sig.m1), np.zeros((rest, rest)))
    lower = block_diag(np.zeros((2 * sig.m, 2 * sig.m)), np.eye(sig.m1), np.zeros((rest, rest)))
    return upper, lower
