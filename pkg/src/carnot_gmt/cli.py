"""Command line entry point: ``carnot-gmt run | suite | catalog``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import __version__
from . import algebra as ca
from . import catalog as cat
from . import ineq as iq
from . import report
from .errors import MalformedInputError, PreconditionError
from .quadrature import worker_count
from .scenario import CHECKS, parse_scenario, run_scenario

EXIT_OK, EXIT_MALFORMED, EXIT_PRECONDITION = 0, 1, 2


def _load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise MalformedInputError(f"{path}: {exc.strerror}") from exc


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_.[]" else "_" for c in name) or "scenario"


def _write_result(out: str, res) -> None:
    base = os.path.join(out, _safe_name(res.row["name"]))
    report.write_text(base + ".json", report.json_text({"row": res.row, "report": res.document}))
    report.write_text(base + ".csv", report.csv_text([res.row]))
    if res.profile:
        report.write_text(base + "_profile.csv", report.csv_text(res.profile, res.profile_columns))


def cmd_run(args) -> int:
    doc = _load_json(args.scenario)
    default = os.path.splitext(os.path.basename(args.scenario))[0]
    sc = parse_scenario(doc, default)
    res = run_scenario(sc)
    os.makedirs(args.out, exist_ok=True)
    _write_result(args.out, res)
    r = res.row
    print(f"{r['name']}: {r['check']} verdict={r['verdict']} lhs={report.fmt(r['lhs'])} rhs={report.fmt(r['rhs'])} value={report.fmt(r['value'])}")
    return EXIT_OK


def load_manifest(path: str) -> list:
    """Scenario documents of a manifest ``{"scenarios": [...]}`` (or a bare
    list).  String entries are paths relative to the manifest."""
    doc = _load_json(path)
    entries = doc.get("scenarios") if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise MalformedInputError("manifest must be a list or {'scenarios': [...]}")
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for i, e in enumerate(entries):
        if isinstance(e, str):
            p = os.path.join(base, e)
            sub = _load_json(p)
            sub.setdefault("name", os.path.splitext(os.path.basename(e))[0])
            out.append(sub)
        elif isinstance(e, dict):
            out.append(dict(e))
        else:
            raise MalformedInputError(f"manifest entry {i} is neither a path nor an object")
    return out


def disambiguate(names: list) -> list:
    """Duplicate names get their manifest index as suffix, ``name[i]``."""
    counts = {}
    for n in names:
        counts[n] = counts.get(n, 0) + 1
    return [f"{n}[{i}]" if counts[n] > 1 else n for i, n in enumerate(names)]


def cmd_suite(args) -> int:
    docs = load_manifest(args.manifest)
    names = disambiguate([str(d.get("name", f"scenario{i}")) for i, d in enumerate(docs)])
    scenarios = []
    for i, (d, name) in enumerate(zip(docs, names)):
        d = dict(d)
        d["name"] = name
        try:
            scenarios.append(parse_scenario(d, name))
        except MalformedInputError as exc:
            raise MalformedInputError(f"scenario {i} ({name}): {exc}") from exc
    os.makedirs(args.out, exist_ok=True)

    def one(sc):
        try:
            return run_scenario(sc), None
        except PreconditionError as exc:
            return None, f"{type(exc).__name__}: {exc}"

    workers = min(worker_count(), max(len(scenarios), 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, scenarios))
    else:
        results = [one(sc) for sc in scenarios]
    rows, failed = [], 0
    for sc, (res, err) in zip(scenarios, results):
        if res is None:
            failed += 1
            row = {"name": sc.name, "check": sc.check, "group": sc.alg.name, "verdict": "precondition-error",
                   "constants": {"message": err}, **sc.meta}
            print(f"{sc.name}: precondition error: {err}", file=sys.stderr)
        else:
            _write_result(args.out, res)
            row = res.row
        rows.append(row)
        print(f"{row['name']}: {row['check']} verdict={row['verdict']}")
    report.write_text(os.path.join(args.out, "summary.csv"), report.csv_text(rows))
    tally = {}
    for r in rows:
        tally[r["verdict"]] = tally.get(r["verdict"], 0) + 1
    identity_violations = sum(1 for r in rows if r.get("check") in ("coarea", "divergence") and r["verdict"] == "violated")
    summary = {"scenarios": len(rows), "verdicts": tally, "identity_violations": identity_violations, "version": __version__}
    report.write_text(os.path.join(args.out, "summary.json"), report.json_text(summary))
    print(f"{len(rows)} scenarios; " + ", ".join(f"{k}={v}" for k, v in sorted(tally.items())))
    return EXIT_PRECONDITION if failed else EXIT_OK


def cmd_catalog(args) -> int:
    lines = ["groups:"]
    for name, make in ca.BUILTIN_GROUPS.items():
        alg = make()
        lines.append(f"  {name}: layer_dims={list(alg.layer_dims)} n={alg.n} Q={alg.Q}")
    lines.append("norms:")
    lines.append("  koranyi: (|x_H|^4 + 16 t^2)^(1/4), Heisenberg groups")
    lines.append("  power: {lambda, C}: (|x_H|^lambda + sum_i C_i |x_{H_i}|^(lambda/i))^(1/lambda)")
    lines.append("surfaces:")
    for s in cat.SURFACE_NAMES:
        lines.append(f"  {s}")
    lines.append("checks:")
    lines.append("  " + ", ".join(CHECKS))
    lines.append("test functions:")
    lines.append("  " + ", ".join(sorted(iq.TEST_FUNCTIONS)) + ", one")
    lines.append("fields: Xj, xiXj    functions: x1..xn")
    print("\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="carnot-gmt", description="Geometric measure theory checks on Carnot groups.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one scenario file")
    r.add_argument("scenario")
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("suite", help="run every scenario of a manifest")
    s.add_argument("manifest")
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_suite)
    c = sub.add_parser("catalog", help="list groups, norms, surfaces and checks")
    c.set_defaults(func=cmd_catalog)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MalformedInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except PreconditionError as exc:
        print(f"precondition failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
