"""Lower/upper joint probability operators for two (non-commuting) projectors.

    lower(P, Q) = P ^ Q
    upper(P, Q) = P v Q - (P - Q)^2

Their Born expectations bracket every admissible joint probability of the
two events.  :func:`validate_pair` runs the full battery of properties the
pair must satisfy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lattice import DEFAULT_METHOD, join, meet
from .operators import (
    DensityMatrix,
    HermitianOperator,
    OperatorError,
    Projector,
    born_expectation,
    check_same_dim,
    commutator,
    hermitian_part,
    max_abs,
    min_eigenvalue,
)

CLAMP_TOL = 1e-9
CHECK_TOL = 1e-9
# mixing weights for states that commute with P (or Q)
COMMUTING_STATE_WEIGHTS = (0.0, 0.3, 0.7, 1.0)


class IntervalClampError(OperatorError):
    pass


@dataclass(frozen=True)
class ProbabilityInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if not (0.0 <= self.lower <= 1.0 and 0.0 <= self.upper <= 1.0):
            raise ValueError(f"interval ({self.lower}, {self.upper}) outside [0, 1]")
        if self.lower > self.upper + 1e-12:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def is_precise(self) -> bool:
        return self.width <= 1e-12


@dataclass(frozen=True, eq=False)
class ProjectorResolution:
    """Mutually orthogonal projectors summing to the identity."""

    parts: tuple[Projector, ...]

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise OperatorError("resolution needs at least one projector")
        n = check_same_dim(*parts)
        total = sum(p.matrix for p in parts)
        if max_abs(total - np.eye(n)) > 1e-10:
            raise OperatorError("resolution does not sum to the identity")
        for i, a in enumerate(parts):
            for b in parts[i + 1:]:
                if max_abs(a.matrix @ b.matrix) > 1e-10:
                    raise OperatorError("resolution parts are not mutually orthogonal")
        object.__setattr__(self, "parts", parts)


@dataclass(frozen=True, eq=False)
class ImpreciseOperatorPair:
    lower: Projector
    upper: HermitianOperator
    p: Projector
    q: Projector


def lower_operator(p: Projector, q: Projector, method: str = DEFAULT_METHOD) -> Projector:
    return meet(p, q, method)


def upper_operator(p: Projector, q: Projector, method: str = DEFAULT_METHOD) -> HermitianOperator:
    d = p.matrix - q.matrix
    return HermitianOperator.symmetrized(join(p, q, method).matrix - d @ d)


def imprecise_operators(p: Projector, q: Projector, method: str = DEFAULT_METHOD) -> ImpreciseOperatorPair:
    return ImpreciseOperatorPair(lower_operator(p, q, method), upper_operator(p, q, method), p, q)


def _clamp(x: float, what: str) -> float:
    if x < 0.0:
        if x < -CLAMP_TOL:
            raise IntervalClampError(f"{what} probability {x!r} is below 0")
        return 0.0
    if x > 1.0:
        if x > 1.0 + CLAMP_TOL:
            raise IntervalClampError(f"{what} probability {x!r} is above 1")
        return 1.0
    return x


def imprecise_probability(rho: DensityMatrix, p: Projector, q: Projector) -> ProbabilityInterval:
    ops = imprecise_operators(p, q)
    lo = _clamp(born_expectation(rho, ops.lower), "lower")
    hi = _clamp(born_expectation(rho, ops.upper), "upper")
    # equal operators can differ by rounding in the last bit
    if lo > hi and lo - hi <= 1e-12:
        hi = lo
    return ProbabilityInterval(lo, hi)


def interval_consistent(a: ProbabilityInterval, b: ProbabilityInterval) -> bool:
    """True when ``b`` is a coarser interval that can hold alongside ``a``."""
    return b.lower <= a.lower and b.upper >= a.upper


def commuting_states(p: Projector) -> list[DensityMatrix]:
    """Spectral mixtures ``a P/tr P + (1-a) P'/tr P'`` that commute with ``P``."""
    n = p.dim
    pm, qm = p.matrix, np.eye(n) - p.matrix
    states = []
    for alpha in COMMUTING_STATE_WEIGHTS:
        if alpha > 0 and p.rank == 0:
            continue
        if alpha < 1 and p.rank == n:
            continue
        rho = np.zeros((n, n), dtype=np.complex128)
        if alpha > 0:
            rho += alpha * pm / p.rank
        if alpha < 1:
            rho += (1 - alpha) * qm / (n - p.rank)
        states.append(DensityMatrix(hermitian_part(rho)))
    return states


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)
    observations: dict = field(default_factory=dict)

    def add(self, name: str, residual: float, tolerance: float, **extra):
        entry = {"residual": float(residual), "tolerance": float(tolerance),
                 "pass": bool(residual <= tolerance)}
        entry.update(extra)
        self.checks[name] = entry

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, c in self.checks.items() if not c["pass"]]

    def to_dict(self) -> dict:
        return {"checks": self.checks, "observations": self.observations, "passed": self.passed}


def _psd_violation(a) -> float:
    """How far below zero the spectrum of ``a`` reaches (0 when PSD)."""
    return max(0.0, -min_eigenvalue(a))


def validate_pair(
    p: Projector,
    q: Projector,
    states: Sequence[DensityMatrix] = (),
    resolution: ProjectorResolution | None = None,
    unitary: np.ndarray | None = None,
    tol: float = CHECK_TOL,
) -> ValidationReport:
    n = check_same_dim(p, q, *states)
    rep = ValidationReport()
    ops = imprecise_operators(p, q)
    lo, up = ops.lower.matrix, ops.upper.matrix
    swapped = imprecise_operators(q, p)
    eye = np.eye(n)

    rep.add("bounds_lower_psd", _psd_violation(lo), tol)
    rep.add("bounds_lower_le_upper", _psd_violation(up - lo), tol)
    rep.add("bounds_upper_le_identity", _psd_violation(eye - up), tol)
    rep.add("symmetry_lower", max_abs(lo - swapped.lower.matrix), 1e-10)
    rep.add("symmetry_upper", max_abs(up - swapped.upper.matrix), 1e-10)

    for name, w in (("lower", lo), ("upper", up)):
        rep.add(f"commutes_{name}_p", max_abs(commutator(w, p)), tol)
        rep.add(f"commutes_{name}_q", max_abs(commutator(w, q)), tol)
    rep.add("commutes_upper_lower", max_abs(commutator(up, lo)), tol)

    pq = p.matrix @ q.matrix
    commuting = max_abs(commutator(p, q)) <= 1e-12
    if commuting:
        rep.add("commuting_reduction", max(max_abs(lo - pq), max_abs(up - pq)), tol)
    else:
        rep.add("commuting_reduction", 0.0, tol, vacuous=True)

    sym = (pq + pq.conj().T) / 2
    for label, pivot in (("p", p), ("q", q)):
        worst_gap, worst_imag = 0.0, 0.0
        for rho in commuting_states(pivot):
            lo_v = born_expectation(rho, lo)
            up_v = born_expectation(rho, up)
            mid = born_expectation(rho, sym)
            worst_gap = max(worst_gap, lo_v - mid, mid - up_v)
            worst_imag = max(worst_imag, abs(np.trace(rho.matrix @ pq).imag))
        rep.add(f"consistency_commuting_{label}", max(worst_gap, 0.0), tol)
        rep.add(f"consistency_real_{label}", worst_imag, 1e-10)

    for a, b, label in ((p, q, "pqp"), (q, p, "qpq")):
        mid = a.matrix @ b.matrix @ a.matrix
        rep.add(f"sandwich_lower_le_{label}", _psd_violation(mid - lo), tol)
        rep.add(f"sandwich_{label}_le_upper", _psd_violation(up - mid), tol)

    worst = 0.0
    for rho in states:
        lo_v = born_expectation(rho, lo)
        up_v = born_expectation(rho, up)
        worst = max(worst, -lo_v, lo_v - up_v, up_v - 1.0)
    rep.add("state_interval_order", max(worst, 0.0), tol, states=len(states))

    if resolution is not None:
        uppers = sum(upper_operator(pa, q).matrix for pa in resolution.parts)
        lowers = sum(lower_operator(pa, q).matrix for pa in resolution.parts)
        rep.add("subadditivity_upper", _psd_violation(uppers - q.matrix), tol)
        rep.add("superadditivity_lower", _psd_violation(q.matrix - lowers), tol)

    if unitary is not None:
        u = np.asarray(unitary, dtype=np.complex128)
        uh = u.conj().T
        if max_abs(u @ uh - eye) > 1e-10:
            raise OperatorError("covariance check needs a unitary")
        up_, uq_ = Projector.snap(u @ p.matrix @ uh), Projector.snap(u @ q.matrix @ uh)
        moved = imprecise_operators(up_, uq_)
        rep.add("covariance_lower", max_abs(u @ lo @ uh - moved.lower.matrix), tol)
        rep.add("covariance_upper", max_abs(u @ up @ uh - moved.upper.matrix), tol)

    # monotonicity is not a requirement; record whether it happens to hold
    rep.observations["upper_le_q"] = _psd_violation(q.matrix - up) <= tol
    rep.observations["upper_le_p"] = _psd_violation(p.matrix - up) <= tol
    rep.observations["commuting"] = commuting
    return rep

