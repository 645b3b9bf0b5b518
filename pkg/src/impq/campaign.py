"""Randomized verification campaigns over two-particle scenes.

Every sample is a pure function of ``(d1, d2, seed)`` where the seed is
derived from the master seed and the sample's coordinates, so any failure
can be replayed on its own with :func:`run_sample`.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import csd, imprecise, lattice, nonlocality
from .operators import (
    MASK64,
    DensityMatrix,
    Projector,
    ProjectorError,
    derive_seed,
    haar_random_projector,
    haar_unitary,
    make_rng,
    max_abs,
    min_eigenvalue,
    projector_from_basis,
    random_density,
)

ALL_CHECKS = ("lattice", "imprecise", "cs", "gap", "appendix", "spin")
DEFAULT_DIMS = ((2, 2), (2, 3), (3, 3), (4, 4), (3, 5))
DEFAULT_SAMPLES = 50
MAX_PRODUCT_DIM = 256
# principal angles closer than this to 0 or pi/2 get redrawn; below ~7e-3 the
# iterate meet cannot reach its 1e-12 stopping rule within 2**20 powers
MIN_ANGLE = 1e-2
MAX_REDRAWS = 100

DEFAULT_TOLERANCES = {
    "lattice_agreement": 1e-8,
    "lattice_order": 1e-9,
    "lattice_symmetry": 1e-10,
    "dimension_identity": 1e-8,
    "imprecise": 1e-9,
    "cs_roundtrip": 1e-9,
    "cs_structure": 1e-9,
    "gap_psd": 1e-9,
    "gap_block": 1e-8,
    "gap_vanish": 1e-9,
    "gap_nonzero": 1e-6,
    "lower_locality": 1e-8,
    "appendix": 1e-8,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    dims: tuple[tuple[int, int], ...] = DEFAULT_DIMS
    samples_per_dim: int = DEFAULT_SAMPLES
    master_seed: int = 0
    tolerances: dict = field(default_factory=dict)
    checks: tuple[str, ...] = ALL_CHECKS
    max_product_dim: int = MAX_PRODUCT_DIM

    def __post_init__(self):
        dims = tuple((int(a), int(b)) for a, b in self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "checks", tuple(self.checks))
        if not dims:
            raise ConfigError("dims must not be empty")
        for d1, d2 in dims:
            if d1 < 2 or d2 < 2:
                raise ConfigError(f"dims must be >= 2, got ({d1}, {d2})")
            if d1 * d2 > self.max_product_dim:
                raise ConfigError(f"product dimension {d1 * d2} exceeds cap {self.max_product_dim}")
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError(f"master_seed must be a non-negative integer, got {self.master_seed!r}")
        if self.samples_per_dim < 1:
            raise ConfigError("samples_per_dim must be positive")
        unknown = set(self.checks) - set(ALL_CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks: {sorted(unknown)}")
        bad = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if bad:
            raise ConfigError(f"unknown tolerance names: {sorted(bad)}")

    @property
    def tol(self) -> dict:
        return {**DEFAULT_TOLERANCES, **self.tolerances}

    @classmethod
    def from_dict(cls, doc: dict) -> "CampaignConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {"dims", "samples_per_dim", "master_seed", "tolerances", "checks", "max_product_dim"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "dims": [list(d) for d in self.dims],
            "samples_per_dim": self.samples_per_dim,
            "master_seed": self.master_seed,
            "tolerances": self.tol,
            "checks": list(self.checks),
            "max_product_dim": self.max_product_dim,
        }

    def with_overrides(self, **kw) -> "CampaignConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def load_config(path) -> CampaignConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return CampaignConfig.from_dict(doc)


# -- instance generation ----------------------------------------------------------


def well_separated(p: Projector, q: Projector, min_angle: float = MIN_ANGLE) -> bool:
    """Every principal angle is either exactly 0 or pi/2, or at least ``min_angle`` from both."""
    w = np.linalg.eigvalsh(p.matrix + q.matrix)
    for lam in w:
        if min(abs(lam), abs(lam - 1), abs(lam - 2)) <= 1e-10:
            continue
        theta = np.arccos(min(abs(lam - 1.0), 1.0))
        if theta < min_angle or theta > np.pi / 2 - min_angle:
            return False
    return True


def random_pair(dim: int, rank_p: int, rank_q: int, rng: np.random.Generator,
                min_angle: float = MIN_ANGLE) -> tuple[Projector, Projector]:
    for _ in range(MAX_REDRAWS):
        p = haar_random_projector(dim, rank_p, rng)
        q = haar_random_projector(dim, rank_q, rng)
        if well_separated(p, q, min_angle):
            return p, q
    raise ProjectorError(f"could not draw a well-separated pair in dim {dim}")


def commuting_partner(p: Projector, rng: np.random.Generator) -> Projector:
    """Random projector commuting with ``p``: a random set of its eigenvectors."""
    w, v = np.linalg.eigh(p.matrix)
    pick = rng.random(p.dim) < 0.5
    if not pick.any():
        pick[rng.integers(p.dim)] = True
    return projector_from_basis(v[:, pick])


def random_resolution(dim: int, rng: np.random.Generator) -> imprecise.ProjectorResolution:
    u = haar_unitary(dim, rng)
    k = int(rng.integers(2, dim + 1))
    cuts = np.sort(rng.choice(np.arange(1, dim), size=k - 1, replace=False))
    parts = np.split(np.arange(dim), cuts)
    return imprecise.ProjectorResolution(tuple(projector_from_basis(u[:, idx]) for idx in parts))


def _ranks(dim: int, rng: np.random.Generator) -> tuple[int, int]:
    return int(rng.integers(1, dim)), int(rng.integers(1, dim))


@dataclass(frozen=True, eq=False)
class SampleInstance:
    dims: tuple[int, int]
    seed: int
    scene: nonlocality.TwoParticleScene
    states: tuple
    resolutions: tuple
    unitaries: tuple
    commuting_q2: Projector


def draw_instance(d1: int, d2: int, seed: int) -> SampleInstance:
    rng = make_rng(seed)
    p1, q1 = random_pair(d1, *_ranks(d1, rng), rng)
    p2, q2 = random_pair(d2, *_ranks(d2, rng), rng)
    states = tuple(
        (random_density(d, int(rng.integers(1, d + 1)), rng), random_density(d, 1, rng))
        for d in (d1, d2)
    )
    resolutions = (random_resolution(d1, rng), random_resolution(d2, rng))
    unitaries = (haar_unitary(d1, rng), haar_unitary(d2, rng))
    return SampleInstance(
        dims=(d1, d2), seed=seed,
        scene=nonlocality.TwoParticleScene(p1, q1, p2, q2),
        states=states, resolutions=resolutions, unitaries=unitaries,
        commuting_q2=commuting_partner(p2, rng),
    )


# -- per-sample checks -------------------------------------------------------------


def _entry(residual: float, tolerance: float, **extra) -> dict:
    out = {"residual": float(residual), "tolerance": float(tolerance), "pass": bool(residual <= tolerance)}
    out.update(extra)
    return out


def _lattice_checks(p: Projector, q: Projector, tol: dict) -> dict:
    out = {}
    meets = {m: lattice.meet(p, q, m).matrix for m in lattice.MEET_METHODS}
    joins = {m: lattice.join(p, q, m).matrix for m in lattice.JOIN_METHODS}

    def spread(ms):
        vals = list(ms.values())
        return max(np.linalg.norm(a - b) for a in vals for b in vals)

    out["meet_method_agreement"] = _entry(spread(meets), tol["lattice_agreement"])
    out["join_method_agreement"] = _entry(spread(joins), tol["lattice_agreement"])
    mt, jn = lattice.meet(p, q), lattice.join(p, q)
    order = max(
        max(0.0, -min_eigenvalue(p.matrix - mt.matrix)),
        max(0.0, -min_eigenvalue(q.matrix - mt.matrix)),
        max(0.0, -min_eigenvalue(jn.matrix - p.matrix)),
        max(0.0, -min_eigenvalue(jn.matrix - q.matrix)),
    )
    out["loewner_bounds"] = _entry(order, tol["lattice_order"])
    demorgan = lattice.complement(lattice.meet(lattice.complement(p), lattice.complement(q)))
    out["de_morgan"] = _entry(max_abs(jn.matrix - demorgan.matrix), tol["lattice_order"])
    sym = max(max_abs(mt.matrix - lattice.meet(q, p).matrix), max_abs(jn.matrix - lattice.join(q, p).matrix))
    out["symmetry"] = _entry(sym, tol["lattice_symmetry"])
    opc = lattice.order_product_check(p, mt, tol["lattice_order"])
    out["order_product"] = _entry(max(opc.residuals.values(), default=np.inf), tol["lattice_order"])
    dim_id = lattice.dimension_identity_check(p, q, tol["dimension_identity"])
    out["dimension_identity"] = _entry(max(dim_id.residuals.values()), tol["dimension_identity"])
    return out


def _commuting_lattice_checks(p: Projector, q: Projector, tol: dict) -> dict:
    pq = p.matrix @ q.matrix
    res = max(
        max_abs(lattice.meet(p, q).matrix - pq),
        max_abs(lattice.join(p, q).matrix - (p.matrix + q.matrix - pq)),
    )
    return {"commuting_reduction": _entry(res, tol["lattice_order"])}


def _imprecise_checks(p, q, states, resolution, unitary, tol) -> tuple[dict, dict]:
    rep = imprecise.validate_pair(p, q, states, resolution, unitary, tol=tol["imprecise"])
    # the validator keeps its fixed 1e-10 for the symmetry and reality checks
    checks = {name: _entry(e["residual"], e["tolerance"]) for name, e in rep.checks.items()}
    return checks, rep.observations


def _cs_checks(p: Projector, q: Projector, unitary: np.ndarray, tol: dict) -> dict:
    dec = csd.cs_decompose(p, q)
    out = {"roundtrip": _entry(csd.reconstruction_residual(dec, p, q), tol["cs_roundtrip"])}
    out["structure"] = _entry(max(csd.decomposition_residuals(dec, p, q).values()), tol["cs_structure"])
    rel = csd.generic_relations_check(dec, tol["cs_structure"])
    out["generic_relations"] = _entry(max(rel["residuals"].values(), default=0.0), tol["cs_structure"])
    upper_c, lower_c = csd.canonical_imprecise(dec)
    ops = imprecise.imprecise_operators(p, q)
    out["canonical_imprecise"] = _entry(
        max(max_abs(csd.to_original(dec, upper_c) - ops.upper.matrix),
            max_abs(csd.to_original(dec, lower_c) - ops.lower.matrix)),
        tol["cs_structure"],
    )
    sig = dec.signature
    ranks = (
        lattice.meet(p, q).rank,
        lattice.meet(lattice.complement(p), q).rank,
        lattice.meet(p, lattice.complement(q)).rank,
        lattice.meet(lattice.complement(p), lattice.complement(q)).rank,
    )
    mismatch = int(ranks != (sig.m1, sig.m2, sig.m3, sig.m4)) + int(sig.dim != p.dim)
    out["signature_matches_meets"] = _entry(mismatch, 0)
    u = unitary
    moved = csd.cs_decompose(Projector.snap(u @ p.matrix @ u.conj().T), Projector.snap(u @ q.matrix @ u.conj().T))
    out["signature_invariant"] = _entry(int(moved.signature != sig), 0)
    angles = dec.angles
    inside = 0.0 if not sig.m else max(0.0, csd.ANGLE_FLOOR - angles.min(), angles.max() - (np.pi / 2 - csd.ANGLE_FLOOR))
    out["angles_strictly_inside"] = _entry(inside, 0.0)
    return out


def _gap_checks(inst: SampleInstance, tol: dict) -> tuple[dict, dict]:
    s = inst.scene
    out = {}
    gap = nonlocality.upper_gap(s)
    out["gap_psd"] = _entry(max(0.0, -gap.min_eigenvalue), tol["gap_psd"])
    out["gap_block_form"] = _entry(gap.residual, tol["gap_block"])
    both_generic = s.cs1.signature.m >= 1 and s.cs2.signature.m >= 1
    if both_generic:
        # nonzero: residual is how far the gap falls short of the threshold
        out["gap_nonzero"] = _entry(max(0.0, tol["gap_nonzero"] - gap.max_abs), 0.0)

    commuting = nonlocality.TwoParticleScene(s.p1, s.q1, s.p2, inst.commuting_q2)
    cg = nonlocality.upper_gap(commuting)
    out["gap_vanishes_commuting"] = _entry(cg.max_abs, tol["gap_vanish"])
    out["gap_commuting_block_form"] = _entry(cg.residual, tol["gap_block"])

    eye = Projector.identity(s.p2.dim)
    marginal = nonlocality.TwoParticleScene(s.p1, s.q1, eye, eye)
    mg = nonlocality.upper_gap(marginal)
    upper1 = imprecise.upper_operator(s.p1, s.q1).matrix
    marg = max(mg.max_abs, max_abs(marginal.product_upper() - nonlocality.kron(upper1, eye.matrix)))
    out["gap_vanishes_marginal"] = _entry(marg, tol["gap_vanish"])

    lf = nonlocality.lower_factorization_check(s, tol["lower_locality"])
    out["lower_locality"] = _entry(max(lf["residuals"].values()), tol["lower_locality"])
    lfc = nonlocality.lower_factorization_check(commuting, tol["lower_locality"])
    out["lower_locality_commuting"] = _entry(max(lfc["residuals"].values()), tol["lower_locality"])

    d = nonlocality.pairing_difference(s)
    dc = nonlocality.pairing_difference(commuting)
    out["pairing_equal_commuting"] = _entry(dc.max_abs, tol["gap_vanish"])
    obs = {
        "gap_max_abs": gap.max_abs,
        "pairing_difference_max_abs": d.max_abs,
        "both_generic": both_generic,
    }
    return out, obs


def _appendix_checks(inst: SampleInstance, tol: dict) -> dict:
    rep = nonlocality.verify_appendix(inst.scene, tol["appendix"])
    if rep.vacuous:
        return {}
    return {f"appendix_{k}": _entry(v, tol["appendix"]) for k, v in rep.residuals.items()}


def run_sample(d1: int, d2: int, seed: int, tolerances: dict | None = None,
               checks=ALL_CHECKS, index: int = 0) -> dict:
    """Run every selected check on the scene drawn from ``seed``."""
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    result = {"index": index, "dims": [d1, d2], "seed": seed, "checks": {}, "observations": {}}
    try:
        inst = draw_instance(d1, d2, seed)
        s = inst.scene
        result["ranks"] = [s.p1.rank, s.q1.rank, s.p2.rank, s.q2.rank]
        result["signatures"] = [list(s.cs1.signature.astuple()), list(s.cs2.signature.astuple())]
        sides = ((1, s.p1, s.q1), (2, s.p2, s.q2))
        c = result["checks"]
        if "lattice" in checks:
            for k, p, q in sides:
                for name, e in _lattice_checks(p, q, tol).items():
                    c[f"lattice.{k}.{name}"] = e
            for name, e in _commuting_lattice_checks(s.p2, inst.commuting_q2, tol).items():
                c[f"lattice.2.{name}"] = e
            dim_id = lattice.dimension_identity_check(nonlocality.kron_projector(s.p1, s.p2),
                                                      nonlocality.kron_projector(s.q1, s.q2))
            c["lattice.product.dimension_identity"] = _entry(max(dim_id.residuals.values()),
                                                             tol["dimension_identity"])
        if "imprecise" in checks:
            for k, p, q in sides:
                checks_, obs = _imprecise_checks(p, q, inst.states[k - 1], inst.resolutions[k - 1],
                                                 inst.unitaries[k - 1], tol)
                for name, e in checks_.items():
                    c[f"imprecise.{k}.{name}"] = e
                result["observations"][f"imprecise.{k}"] = obs
            # raises (and so fails the sample) if the interval needs clamping beyond 1e-9
            rho = DensityMatrix(nonlocality.kron(inst.states[0][0].matrix, inst.states[1][0].matrix))
            iv = imprecise.imprecise_probability(rho, nonlocality.kron_projector(s.p1, s.p2),
                                                 nonlocality.kron_projector(s.q1, s.q2))
            c["imprecise.product.interval"] = _entry(max(0.0, iv.lower - iv.upper), 1e-12)
        if "cs" in checks:
            for k, p, q in sides:
                for name, e in _cs_checks(p, q, inst.unitaries[k - 1], tol).items():
                    c[f"cs.{k}.{name}"] = e
        if "gap" in checks:
            gap_checks, obs = _gap_checks(inst, tol)
            for name, e in gap_checks.items():
                c[f"gap.{name}"] = e
            result["observations"]["gap"] = obs
        if "appendix" in checks:
            for name, e in _appendix_checks(inst, tol).items():
                c[f"appendix.{name}"] = e
    except Exception as exc:  # any crash is a failed sample, replayable from its seed
        result["checks"]["error"] = {"residual": None, "tolerance": 0.0, "pass": False,
                                     "message": f"{type(exc).__name__}: {exc}"}
    result["pass"] = all(e["pass"] for e in result["checks"].values())
    return result


def _workers() -> int:
    env = os.environ.get("IMPQ_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cap))
        except ValueError:
            pass
    return cap


def sample_plan(config: CampaignConfig) -> list[tuple[int, int, int, int]]:
    plan = []
    for d1, d2 in config.dims:
        for s in range(config.samples_per_dim):
            seed = derive_seed(config.master_seed, d1, d2, s)
            plan.append((len(plan), d1, d2, seed))
    return plan


def _aggregate(samples: list[dict]) -> dict:
    agg: dict[str, dict] = {}
    for smp in samples:
        for name, e in smp["checks"].items():
            a = agg.setdefault(name, {"passed": 0, "failed": 0, "worst_residual": 0.0, "tolerance": e["tolerance"],
                                      "failures": []})
            if e["pass"]:
                a["passed"] += 1
            else:
                a["failed"] += 1
                a["failures"].append({"index": smp["index"], "dims": smp["dims"], "seed": smp["seed"]})
            r = e["residual"]
            if a["worst_residual"] is not None and (r is None or r > a["worst_residual"]):
                a["worst_residual"] = r
    return dict(sorted(agg.items()))


def _campaign_level(samples: list[dict], checks) -> dict:
    out = {}
    if "imprecise" in checks:
        witnesses = [
            {"index": s["index"], "side": k}
            for s in samples
            for k in (1, 2)
            if not s["observations"].get(f"imprecise.{k}", {}).get("upper_le_q", True)
        ]
        out["monotonicity_violation_witness"] = {"count": len(witnesses), "pass": bool(witnesses),
                                                 "first": witnesses[0] if witnesses else None}
    if "gap" in checks:
        nonzero = [s["index"] for s in samples if s["observations"].get("gap", {}).get("gap_max_abs", 0.0) > 1e-6]
        out["nonzero_gap_witness"] = {"count": len(nonzero), "pass": bool(nonzero)}
    return out


def run_campaign(config: CampaignConfig) -> dict:
    """Run the campaign; the returned report is a plain, deterministic JSON-able dict."""
    report: dict = {"config": config.to_dict()}
    sample_checks = tuple(c for c in config.checks if c != "spin")
    if sample_checks:
        plan = sample_plan(config)
        tol = config.tol

        def job(item):
            index, d1, d2, seed = item
            return run_sample(d1, d2, seed, tol, sample_checks, index)

        workers = _workers()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                samples = list(pool.map(job, plan))
        else:
            samples = [job(item) for item in plan]
        samples.sort(key=lambda s: s["index"])
        report["samples"] = samples
        report["aggregate"] = _aggregate(samples)
        report["campaign"] = _campaign_level(samples, sample_checks)
        failed = [s for s in samples if not s["pass"]]
        report["summary"] = {"samples": len(samples), "passed": len(samples) - len(failed), "failed": len(failed),
                             "failed_seeds": [{"dims": s["dims"], "seed": s["seed"]} for s in failed]}
    if "spin" in config.checks:
        report["spin"] = nonlocality.spin_half_report()
    ok = True
    if "summary" in report:
        ok = report["summary"]["failed"] == 0 and all(v["pass"] for v in report["campaign"].values())
    if "spin" in report:
        ok = ok and report["spin"]["pass"]
    report["pass"] = bool(ok)
    return report


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, default=_json_default, allow_nan=False)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def seed_from_text(text: str) -> int:
    return int(text, 0) & MASK64
