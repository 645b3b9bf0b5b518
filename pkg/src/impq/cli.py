"""Command-line front end.

    impq verify [--config cfg.json] [--seed N] [--samples N] [--json out.json]
    impq verify --replay D1xD2:SEED
    impq spin-example [--json out.json]
    impq gap --p1 P1.json --q1 Q1.json --p2 P2.json --q2 Q2.json [--json out.json]
    impq sweep --grid a:0:1:11,b:auto,phi:0:6.283:12 --csv out.csv

Sweep grid axes are ``name:VALUE`` or ``name:LO:HI:COUNT`` (inclusive); ``b``
also takes ``auto`` (``0.99 sqrt(a(1-a))``) or ``auto:COUNT``.

Exit status: 0 when every check passes, 1 on a failed check, 2 on usage or
input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import campaign, nonlocality
from .io import load_matrix
from .operators import OperatorError, Projector

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
CSV_HEADER = ["a", "b", "phi", "numeric", "closed_form", "abs_diff"]
WITNESS_TOL = 1e-12
AUTO_B_FRACTION = 0.99


class UsageError(Exception):
    pass


def _write_json(path, doc) -> None:
    text = campaign.report_json(doc)
    json.loads(text)  # self-validation before anything touches disk
    Path(path).write_text(text + "\n")


def _parse_replay(text: str) -> tuple[int, int, int]:
    try:
        dims, seed = text.split(":", 1)
        d1, d2 = (int(x) for x in dims.lower().split("x"))
        return d1, d2, campaign.seed_from_text(seed)
    except ValueError as exc:
        raise UsageError(f"--replay expects D1xD2:SEED, got {text!r}") from exc


def cmd_verify(args) -> int:
    if args.replay:
        d1, d2, seed = _parse_replay(args.replay)
        result = campaign.run_sample(d1, d2, seed)
        for name, e in sorted(result["checks"].items()):
            if not e["pass"]:
                print(f"FAIL {name}: residual {e['residual']} > {e['tolerance']} {e.get('message', '')}")
        print(f"replay dims=({d1},{d2}) seed={seed}: {'PASS' if result['pass'] else 'FAIL'}")
        if args.json:
            _write_json(args.json, result)
        return EXIT_OK if result["pass"] else EXIT_FAIL

    try:
        config = campaign.load_config(args.config) if args.config else campaign.CampaignConfig()
        config = config.with_overrides(master_seed=args.seed, samples_per_dim=args.samples)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    except campaign.ConfigError as exc:
        raise UsageError(f"bad config: {exc}") from exc

    report = campaign.run_campaign(config)
    summary = report.get("summary")
    if summary:
        print(f"samples: {summary['samples']}  passed: {summary['passed']}  failed: {summary['failed']}")
        for name, agg in report["aggregate"].items():
            if agg["failed"]:
                seeds = ", ".join(f"{f['dims'][0]}x{f['dims'][1]}:{f['seed']}" for f in agg["failures"][:5])
                print(f"FAIL {name}: {agg['failed']} failures (replay with --replay {seeds})")
        for name, c in report["campaign"].items():
            print(f"{'PASS' if c['pass'] else 'FAIL'} {name} (count {c['count']})")
    if "spin" in report:
        print(f"{'PASS' if report['spin']['pass'] else 'FAIL'} spin-1/2 example")
    print("campaign:", "PASS" if report["pass"] else "FAIL")
    if args.json:
        _write_json(args.json, report)
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_spin(args) -> int:
    rep = nonlocality.spin_half_report()
    conv = rep["convention"]
    print(f"convention: P = {conv['P']}, Q = {conv['Q']}, basis order {conv['product_basis_order']}")
    for name, vals in rep["spectra"].items():
        print(f"spectrum of upper ({name} pairing): " + ", ".join(f"{v:.12f}" for v in vals))
    for name, r in rep["reference_match"].items():
        print(f"{name}: max entry difference {r:.3e} -> {'MATCH' if r <= 1e-12 else 'MISMATCH'}")
    chain = rep["reference_chain"]
    print(f"reference chain (gap equals the other pairing's operator): {'holds' if chain['holds'] else 'does not hold'}"
          f" (residuals {chain['gap_direct_vs_crossed_operator']:.3e},"
          f" {chain['gap_crossed_vs_direct_operator']:.3e})")
    alt = rep["reference_as_gaps_under_plus_convention"]
    print("with P = (1 + sigma_x)/2, Q = (1 + sigma_z)/2 the gaps reproduce the reference matrices:"
          f" residuals {alt['gap_direct_vs_reference_crossed']:.3e}, {alt['gap_crossed_vs_reference_direct']:.3e}")
    print(f"trace of pairing difference: {rep['difference_trace']:.3e}  (max entry {rep['difference_max_abs']:.6f})")
    w = rep["witness"]
    print(f"separable witness: {w['points']} points, max |numeric - closed form| = {w['max_abs_difference']:.3e},"
          f" min value {w['min_value']:.3e}, value at (1, 0, 0) = {w['at_a1_b0_phi0'][0]:.15f}")
    print("spin-example:", "PASS" if rep["pass"] else "FAIL")
    if args.json:
        _write_json(args.json, rep)
    return EXIT_OK if rep["pass"] else EXIT_FAIL


def _load_projector(path) -> Projector:
    try:
        return Projector(load_matrix(path))
    except OSError as exc:
        raise UsageError(f"{path}: {exc}") from exc
    except OperatorError as exc:
        msg = str(exc)
        raise UsageError(msg if msg.startswith(str(path)) else f"{path}: {msg}") from exc


def cmd_gap(args) -> int:
    p1, q1, p2, q2 = (_load_projector(x) for x in (args.p1, args.q1, args.p2, args.q2))
    try:
        scene = nonlocality.TwoParticleScene(p1, q1, p2, q2)
    except OperatorError as exc:
        raise UsageError(str(exc)) from exc
    gap = nonlocality.upper_gap(scene)
    lower = nonlocality.lower_factorization_check(scene)
    diff = nonlocality.pairing_difference(scene)
    print(f"signatures (m, m1, m2, m3, m4): {gap.signatures[0]} and {gap.signatures[1]}")
    print(f"gap max entry: {gap.max_abs:.3e}   smallest eigenvalue: {gap.min_eigenvalue:.3e}")
    print(f"block-form residual: {gap.residual:.3e}   off-block residual: {gap.off_block_residual:.3e}")
    print(f"lower-operator locality residual: {max(lower['residuals'].values()):.3e}")
    print(f"pairing difference: max entry {diff.max_abs:.3e}, trace {diff.trace:.3e}")
    ok = gap.passed() and lower["passed"]
    print("gap:", "PASS" if ok else "FAIL")
    if args.json:
        _write_json(args.json, {
            "gap": gap.to_dict(include_matrices=True),
            "lower_factorization": lower,
            "pairing_difference": {"max_abs": diff.max_abs, "trace": diff.trace},
            "pass": ok,
        })
    return EXIT_OK if ok else EXIT_FAIL


def _axis(text: str, name: str) -> list[float]:
    parts = text.split(":")
    try:
        vals = [float(x) for x in parts]
    except ValueError as exc:
        raise UsageError(f"grid axis {name!r}: cannot parse {text!r}") from exc
    if len(vals) == 1:
        return vals
    if len(vals) == 3 and vals[2] >= 1 and vals[2] == int(vals[2]):
        return np.linspace(vals[0], vals[1], int(vals[2])).tolist()
    raise UsageError(f"grid axis {name!r}: expected VALUE or LO:HI:COUNT, got {text!r}")


def _auto_b(text: str) -> tuple:
    """``auto`` is ``b = 0.99 sqrt(a(1-a))``; ``auto:N`` spreads N values over ``[0, 0.99 sqrt(a(1-a))]``."""
    if text == "auto":
        return ("auto", [AUTO_B_FRACTION])
    head, _, count = text.partition(":")
    if head != "auto" or not count.isdigit() or int(count) < 1:
        raise UsageError(f"grid axis 'b': expected auto or auto:COUNT, got {text!r}")
    return ("auto", np.linspace(0.0, AUTO_B_FRACTION, int(count)).tolist())


def parse_grid(text: str) -> dict:
    axes = {}
    for token in text.split(","):
        name, _, text = token.strip().partition(":")
        if name not in ("a", "b", "phi") or not text:
            raise UsageError(f"bad grid token {token!r}")
        if name in axes:
            raise UsageError(f"grid axis {name!r} given twice")
        axes[name] = _auto_b(text) if (name == "b" and text.startswith("auto")) else _axis(text, name)
    missing = {"a", "b", "phi"} - set(axes)
    if missing:
        raise UsageError(f"grid is missing axes {sorted(missing)}")
    if any(not 0.0 <= a <= 1.0 for a in axes["a"]):
        raise UsageError("grid: a must lie in [0, 1]")
    if any(not 0.0 <= p < 2 * np.pi for p in axes["phi"]):
        raise UsageError("grid: phi must lie in [0, 2 pi)")
    return axes


def sweep_separable(axes: dict) -> list[tuple]:
    """Rows ``(a, b, phi, numeric, closed_form, abs_diff)`` over the grid."""
    rows = []
    for a in axes["a"]:
        if isinstance(axes["b"], tuple):
            bs = [f * np.sqrt(a * (1 - a)) for f in axes["b"][1]]
        else:
            bs = axes["b"]
        for b in bs:
            if b * b > a * (1 - a) + 1e-15:
                raise UsageError(f"grid: b = {b} is not admissible for a = {a} (need a(1-a) >= b^2)")
            for phi in axes["phi"]:
                num, closed = nonlocality.separable_witness(a, b, phi)
                rows.append((a, b, phi, num, closed, abs(num - closed)))
    return rows


def _write_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])
    with open(path, newline="") as fh:
        back = list(csv.reader(fh))
    if back[0] != CSV_HEADER or len(back) != len(rows) + 1 or any(len(r) != 6 for r in back[1:]):
        raise RuntimeError("CSV output failed self-validation")
    [float(x) for r in back[1:] for x in r]


def cmd_sweep(args) -> int:
    rows = sweep_separable(parse_grid(args.grid))
    if args.csv:
        try:
            _write_csv(args.csv, rows)
        except OSError as exc:
            raise UsageError(f"cannot write {args.csv}: {exc}") from exc
    worst = max(r[5] for r in rows)
    lowest = min(min(r[3], r[4]) for r in rows)
    ok = worst <= WITNESS_TOL and lowest >= -WITNESS_TOL
    print(f"rows: {len(rows)}  max |numeric - closed form|: {worst:.3e}  min value: {lowest:.3e}")
    print("sweep:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="impq", description="Imprecise joint probability verification harness")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run a randomized verification campaign")
    v.add_argument("--config", help="campaign config (JSON)")
    v.add_argument("--seed", type=campaign.seed_from_text, help="override the master seed")
    v.add_argument("--samples", type=int, help="override samples per dimension pair")
    v.add_argument("--replay", help="rerun one sample, given as D1xD2:SEED")
    v.add_argument("--json", help="write the full report here")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("spin-example", help="reproduce the two spin-1/2 particle example")
    s.add_argument("--json")
    s.set_defaults(func=cmd_spin)

    g = sub.add_parser("gap", help="upper-operator gap for user-supplied projectors")
    for name in ("p1", "q1", "p2", "q2"):
        g.add_argument(f"--{name}", required=True, help="matrix JSON file")
    g.add_argument("--json")
    g.set_defaults(func=cmd_gap)

    w = sub.add_parser("sweep", help="separable-state witness over a parameter grid")
    w.add_argument("--grid", default="a:0:1:11,b:auto,phi:0:6.283:12")
    w.add_argument("--csv")
    w.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
