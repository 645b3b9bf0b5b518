"""Complement, meet and join of projectors, each by more than one route.

Meet routes:

``spectral``
    eigenvectors of ``P + Q`` whose eigenvalue lies within ``MEET_EIG_TOL``
    of 2 (the eigenvalues of ``P + Q`` are ``1 +- cos(theta)`` over the
    principal angles, and exactly 2 on the intersection).
``iterate``
    ``(PQ)^n`` by repeated squaring until two successive powers agree.
``cs_based``
    read off the ``P and Q`` sector of the CS decomposition.

Join routes are ``spectral``/``iterate``/``cs_based`` through De Morgan plus
``pinv_join``: ``(P + Q)(P + Q)^+``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import (
    OperatorError,
    Projector,
    check_same_dim,
    commutator,
    loewner_leq,
    max_abs,
    pseudo_inverse,
)

MEET_METHODS = ("spectral", "iterate", "cs_based")
JOIN_METHODS = ("spectral", "iterate", "cs_based", "pinv_join")
DEFAULT_METHOD = "spectral"

MEET_EIG_TOL = 1e-8
ITERATE_TOL = 1e-12
# 2**20 effective powers of PQ
ITERATE_MAX_SQUARINGS = 20


class MeetConvergenceError(OperatorError):
    """The ``iterate`` route hit its cap; ``gap`` is the last successive distance."""

    def __init__(self, gap: float, squarings: int):
        super().__init__(
            f"(PQ)^n did not converge after 2**{squarings} powers (last step moved {gap:.3e})"
        )
        self.gap = gap
        self.squarings = squarings


def complement(p: Projector) -> Projector:
    return Projector(np.eye(p.dim) - p.matrix, p.dim - p.rank)


def _meet_spectral(p: Projector, q: Projector) -> Projector:
    w, v = np.linalg.eigh(p.matrix + q.matrix)
    basis = v[:, w > 2.0 - MEET_EIG_TOL]
    return Projector.snap(basis @ basis.conj().T)


def _meet_iterate(p: Projector, q: Projector) -> Projector:
    x = p.matrix @ q.matrix
    eps = np.finfo(float).eps * p.dim
    gap = np.inf
    for k in range(1, ITERATE_MAX_SQUARINGS + 1):
        nxt = x @ x
        gap = float(np.linalg.norm(nxt - x))
        x = nxt
        # rounding on the eigenvalue-1 part is amplified once per power
        if gap < max(ITERATE_TOL, 2**k * eps):
            return Projector.snap(x)
    raise MeetConvergenceError(gap, ITERATE_MAX_SQUARINGS)


def _meet_cs(p: Projector, q: Projector) -> Projector:
    from .csd import cs_decompose, sector_projector

    return sector_projector(cs_decompose(p, q), "m1")


def meet(p: Projector, q: Projector, method: str = DEFAULT_METHOD) -> Projector:
    """Projector onto ``range(P) & range(Q)``."""
    check_same_dim(p, q)
    if method == "spectral":
        return _meet_spectral(p, q)
    if method == "iterate":
        return _meet_iterate(p, q)
    if method == "cs_based":
        return _meet_cs(p, q)
    if method == "pinv_join":
        raise ValueError("pinv_join is a join-only method")
    raise ValueError(f"unknown meet method {method!r}")


def join(p: Projector, q: Projector, method: str = DEFAULT_METHOD) -> Projector:
    """Projector onto ``range(P) + range(Q)``."""
    check_same_dim(p, q)
    if method == "pinv_join":
        s = p.matrix + q.matrix
        return Projector.snap(s @ pseudo_inverse(s))
    if method == "cs_based":
        from .csd import cs_decompose, sector_projector

        return complement(sector_projector(cs_decompose(p, q), "m4"))
    return complement(meet(complement(p), complement(q), method))


def commutes(p: Projector, q: Projector, tol: float = 1e-12) -> bool:
    return max_abs(commutator(p, q)) <= tol


@dataclass
class CheckResult:
    """One named verification outcome."""

    passed: bool
    residuals: dict = field(default_factory=dict)
    message: str = ""
    precondition_failed: bool = False
    traces: dict = field(default_factory=dict)

    def __bool__(self):
        return self.passed


def order_product_check(p: Projector, pp: Projector, tol: float = 1e-9) -> CheckResult:
    """For ``pp <= p``, confirm ``p pp = pp p = pp``."""
    if not loewner_leq(pp, p, tol):
        return CheckResult(False, message="P' <= P does not hold", precondition_failed=True)
    a, b = p.matrix, pp.matrix
    res = {"p_pp": max_abs(a @ b - b), "pp_p": max_abs(b @ a - b)}
    return CheckResult(max(res.values()) <= tol, res)


def dimension_identity_check(p: Projector, q: Projector, tol: float = 1e-8) -> CheckResult:
    """``tr(P v Q) + tr(P ^ Q) == tr P + tr Q`` with every trace an integer."""
    check_same_dim(p, q)
    traces = {
        "join": np.trace(join(p, q).matrix).real,
        "meet": np.trace(meet(p, q).matrix).real,
        "p": np.trace(p.matrix).real,
        "q": np.trace(q.matrix).real,
    }
    res = {f"integrality_{k}": abs(t - round(t)) for k, t in traces.items()}
    res["identity"] = abs(traces["join"] + traces["meet"] - traces["p"] - traces["q"])
    return CheckResult(max(res.values()) <= tol, res, traces={k: int(round(t)) for k, t in traces.items()})
