"""Scenario documents: parsing, type checks and dispatch to the checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import __version__
from . import algebra as ca
from . import catalog as cat
from . import density as dn
from . import homnorm as hn
from . import ineq as iq
from . import surface as sf
from .errors import MalformedInputError
from .quadrature import DEPTH_CAP, TOL_CELL, QuadratureConfig

CHECKS = (
    "validate",
    "density",
    "kappa",
    "constants",
    "coarea",
    "divergence",
    "monotonicity",
    "linear",
    "isoperimetric",
    "asymptotic",
    "sobolev",
    "mu-ratio",
    "char-scan",
)

# checks that need a surface
_SURFACE_CHECKS = set(CHECKS) - {"validate", "kappa", "constants"}

_KNOWN_KEYS = {
    "name", "group", "norm", "surface", "check", "center", "radii", "direction", "r", "rect",
    "field", "phi", "psi", "p", "scale", "tol_cell", "depth_cap", "tol_char", "seed", "max_evals",
    "method", "mc_samples", "lengths", "directions", "levels", "characteristic",
}


def _horizontal_field(name: str, alg) -> sf.HorizontalField:
    """Fields ``X_j``, ``x_i X_j`` by name, e.g. ``"X2"`` or ``"x2X2"``."""
    import re

    m = re.fullmatch(r"(?:x(\d+))?X(\d+)", name)
    if not m:
        raise MalformedInputError(f"unknown field {name!r}; use 'Xj' or 'xiXj'")
    i = int(m.group(1)) - 1 if m.group(1) else None
    j = int(m.group(2)) - 1
    if j >= alg.h or (i is not None and i >= alg.n):
        raise MalformedInputError(f"field {name!r} does not fit the group")

    def value(x):
        out = np.zeros(x.shape[:-1] + (alg.h,))
        out[..., j] = 1.0 if i is None else x[..., i]
        return out

    def jac(x):
        out = np.zeros(x.shape[:-1] + (alg.h, alg.n))
        if i is not None:
            out[..., j, i] = 1.0
        return out

    return sf.HorizontalField(value, jac)


def _coordinate(name: str, alg) -> sf.SmoothFunction:
    import re

    m = re.fullmatch(r"x(\d+)", name)
    if not m or not 1 <= int(m.group(1)) <= alg.n:
        raise MalformedInputError(f"unknown function {name!r}; use 'x1'..'x{alg.n}'")
    return iq.coordinate_function(alg.n, int(m.group(1)) - 1)


def _floats(value, what: str, length: Optional[int] = None) -> tuple[float, ...]:
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise MalformedInputError(f"{what} must be a list of numbers") from exc
    if length is not None and len(out) != length:
        raise MalformedInputError(f"{what} needs {length} entries, got {len(out)}")
    if not all(math.isfinite(v) for v in out):
        raise MalformedInputError(f"{what} must be finite")
    return out


def _number(value, what: str, positive: bool = False) -> float:
    if isinstance(value, bool):
        raise MalformedInputError(f"{what} must be a number")
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise MalformedInputError(f"{what} must be a number") from exc
    if not math.isfinite(v) or (positive and v <= 0):
        raise MalformedInputError(f"{what} must be {'positive' if positive else 'finite'}")
    return v


@dataclass
class Scenario:
    name: str
    check: str
    doc: dict
    alg: Any
    rho: Any
    surface: Any = None
    config: QuadratureConfig = field(default_factory=QuadratureConfig)
    tol_char: float = sf.TOL_CHAR
    seed: int = 0

    @property
    def meta(self) -> dict:
        return {
            "seed": self.seed,
            "tol_cell": self.config.tol_cell,
            "depth_cap": self.config.depth_cap,
            "tol_char": self.tol_char,
            "version": __version__,
        }


def parse_scenario(doc, default_name: str = "scenario") -> Scenario:
    """Type-check a scenario document and build its group, norm and surface."""
    if not isinstance(doc, dict):
        raise MalformedInputError("scenario must be a JSON object")
    unknown = sorted(set(doc) - _KNOWN_KEYS)
    if unknown:
        raise MalformedInputError(f"unknown scenario keys: {unknown}")
    check = doc.get("check")
    if check not in CHECKS:
        raise MalformedInputError(f"check must be one of {list(CHECKS)}, got {check!r}")
    if "group" not in doc:
        raise MalformedInputError("scenario needs a 'group'")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise MalformedInputError("seed must be a non-negative integer")
    tol_cell = _number(doc.get("tol_cell", TOL_CELL), "tol_cell", positive=True)
    depth_cap = doc.get("depth_cap", DEPTH_CAP)
    if isinstance(depth_cap, bool) or not isinstance(depth_cap, int) or depth_cap < 1:
        raise MalformedInputError("depth_cap must be a positive integer")
    tol_char = _number(doc.get("tol_char", sf.TOL_CHAR), "tol_char", positive=True)
    method = doc.get("method", "adaptive")
    if method not in ("adaptive", "grid", "mc"):
        raise MalformedInputError("method must be adaptive, grid or mc")
    cfg = QuadratureConfig(
        tol_cell=tol_cell,
        depth_cap=depth_cap,
        method=method,
        seed=seed,
        max_evals=int(_number(doc.get("max_evals", QuadratureConfig.max_evals), "max_evals", True)),
        mc_samples=int(_number(doc.get("mc_samples", QuadratureConfig.mc_samples), "mc_samples", True)),
    )
    alg = ca.algebra_from_json(doc["group"])
    name = str(doc.get("name", default_name))
    if check == "validate":
        return Scenario(name, check, doc, alg, None, None, cfg, tol_char, seed)
    if alg.k > 4:
        raise MalformedInputError("only groups of step <= 4 are supported")
    rho = hn.norm_from_json(doc.get("norm"), alg, seed=seed)
    S = None
    probe = check == "isoperimetric" and "lengths" in doc
    if (check in _SURFACE_CHECKS and not probe) or (check == "kappa" and "surface" in doc):
        if "surface" not in doc:
            raise MalformedInputError(f"check {check!r} needs a 'surface'")
        S = cat.surface_from_spec(doc["surface"], alg, rho, tol_char)
    sc = Scenario(name, check, doc, alg, rho, S, cfg, tol_char, seed)
    _check_parameters(sc)
    return sc


def _check_parameters(sc: Scenario) -> None:
    d, alg = sc.doc, sc.alg
    if "center" in d:
        _floats(d["center"], "center", alg.n)
    if "radii" in d:
        radii = _floats(d["radii"], "radii")
        if not radii or any(r <= 0 for r in radii) or any(b >= a for a, b in zip(radii, radii[1:])):
            raise MalformedInputError("radii must be positive and strictly decreasing")
    if "direction" in d:
        v = np.array(_floats(d["direction"], "direction", alg.h))
        if not np.isclose(np.linalg.norm(v), 1.0, atol=1e-9):
            raise MalformedInputError("direction must be a unit horizontal vector")
    if "r" in d:
        _number(d["r"], "r", positive=True)
    if "p" in d:
        p = _number(d["p"], "p")
        if p < 1 or p > alg.Q - 1:
            raise MalformedInputError(f"p must lie in [1, {alg.Q - 1}]")
    if "scale" in d:
        _number(d["scale"], "scale", positive=True)
    if "rect" in d:
        rect = d["rect"]
        if not isinstance(rect, dict) or "lo" not in rect or "hi" not in rect:
            raise MalformedInputError("rect must be {lo: [...], hi: [...]}")
        lo, hi = _floats(rect["lo"], "rect.lo", alg.n - 1), _floats(rect["hi"], "rect.hi", alg.n - 1)
        if any(b <= a for a, b in zip(lo, hi)):
            raise MalformedInputError("rect needs lo < hi")
    if "field" in d:
        _horizontal_field(str(d["field"]), alg)
    if "phi" in d:
        _coordinate(str(d["phi"]), alg)
    if "psi" in d and d["psi"] not in iq.TEST_FUNCTIONS and str(d["psi"]) != "one":
        raise MalformedInputError(f"unknown test function {d['psi']!r}; known: {sorted(iq.TEST_FUNCTIONS)}")
    if "lengths" in d:
        if any(L <= 0 for L in _floats(d["lengths"], "lengths")):
            raise MalformedInputError("lengths must be positive")
    needs_center = {"density", "monotonicity", "linear", "asymptotic", "mu-ratio"}
    if sc.check in needs_center and "center" not in d:
        raise MalformedInputError(f"check {sc.check!r} needs a 'center'")
    if sc.check == "linear" and "r" not in d:
        raise MalformedInputError("check 'linear' needs 'r'")
    if sc.check == "kappa" and "direction" not in d and "center" not in d:
        raise MalformedInputError("check 'kappa' needs a 'direction' or a surface 'center'")
    if sc.check == "coarea" and "phi" not in d:
        raise MalformedInputError("check 'coarea' needs 'phi'")
    if sc.check == "divergence" and "field" not in d:
        raise MalformedInputError("check 'divergence' needs 'field'")


# ------------------------------------------------------------------ results


@dataclass
class Result:
    """Flat summary row, full JSON document and optional profile rows."""

    row: dict
    document: dict
    profile: list = field(default_factory=list)
    profile_columns: tuple = ()


def _row(sc: Scenario, lhs, rhs, error, verdict, value=None, residual=None, constants=None) -> dict:
    lhs = float("nan") if lhs is None else float(lhs)
    rhs = float("nan") if rhs is None else float(rhs)
    return {
        "name": sc.name,
        "check": sc.check,
        "group": sc.alg.name,
        "surface": sc.surface.name if sc.surface is not None else "",
        "lhs": lhs,
        "rhs": rhs,
        "margin": rhs - lhs,
        "error": float("nan") if error is None else float(error),
        "verdict": verdict,
        "value": float("nan") if value is None else float(value),
        "residual": float("nan") if residual is None else float(residual),
        "constants": dict(constants or {}),
        **sc.meta,
    }


def _report_result(sc: Scenario, rep: iq.InequalityReport, value=None) -> Result:
    consts = {k: v for k, v in rep.constants.items() if isinstance(v, (int, float)) and not isinstance(v, bool)}
    row = _row(sc, rep.lhs, rep.rhs, rep.error, rep.verdict, value, rep.residual, consts)
    return Result(row, {**rep.as_dict(), **sc.meta})


def run_scenario(sc: Scenario) -> Result:
    """Execute one parsed scenario."""
    d, alg, rho, S, cfg = sc.doc, sc.alg, sc.rho, sc.surface, sc.config
    center = np.array(d["center"], float) if "center" in d else None
    radii = tuple(float(r) for r in d["radii"]) if "radii" in d else None
    chk = sc.check

    if chk == "validate":
        rep = ca.validate_structure(alg)
        verdict = "holds" if rep.all_pass else "violated"
        doc = {
            "antisymmetry_residual": float(rep.antisymmetry_residual),
            "jacobi_residual": float(rep.jacobi_residual),
            "grading_violations": [list(map(int, v)) if isinstance(v, (tuple, list)) else str(v) for v in rep.grading_violations],
            "bracket_generating": list(rep.bracket_generating),
            "antisymmetry_violations": [list(map(int, v)) for v in rep.antisymmetry_violations],
            "jacobi_violations": [list(map(int, v)) for v in rep.jacobi_violations],
            "all_pass": rep.all_pass,
            "n": alg.n,
            "Q": alg.Q,
            "layer_dims": list(alg.layer_dims),
        }
        res = max(float(rep.antisymmetry_residual), float(rep.jacobi_residual))
        return Result(_row(sc, 0.0, res, 0.0, verdict, residual=res), {**doc, **sc.meta})

    if chk == "density":
        prof = dn.density_profile(S, center, radii, config=cfg)
        rows = [{"t": t, "m": m, "error": e, "evaluations": n} for t, m, e, n in prof.rows()]
        doc = {
            "center": list(prof.center),
            "radii": list(prof.radii),
            "values": list(prof.values),
            "errors": list(prof.errors),
            "kappa_limit": prof.kappa_limit,
            "kappa_uncertainty": prof.kappa_uncertainty,
            "Q": prof.Q,
        }
        nd = sf.normal_data(S, center)
        consts = {}
        notes = []
        if bool(nd.char):
            exact = dn.radial_plane_factor(alg.h // 2) if rho.kind == "koranyi" else None
            if exact is not None and S.name == "cplane":
                consts["radial_oracle"] = exact
                readings = dn.plane_factor_reference_readings(alg.h // 2)
                consts.update({f"reference_{i}": v for i, v in enumerate(readings.values())})
                notes.append(
                    "reference closed form O_{2n}/4n disagrees with the radial integral "
                    f"O_(2n-1)/(2(2n+1)) = {exact:.12g}; readings: "
                    + ", ".join(f"{k} -> {v:.12g}" for k, v in readings.items())
                )
        doc["notes"] = notes
        doc["constants"] = consts
        row = _row(sc, prof.values[-1], prof.kappa_limit, prof.kappa_uncertainty, "reported", prof.kappa_limit, constants=consts)
        return Result(row, {**doc, **sc.meta}, rows, ("t", "m", "error", "evaluations"))

    if chk == "kappa":
        if "direction" in d:
            est = dn.metric_factor_noncharacteristic(alg, rho, np.array(d["direction"], float), None if "method" not in d else cfg)
            K1, K2 = dn.metric_factor_bounds(alg, rho)
            consts = {"K1": K1, "K2": K2, "K1_box": dn.box_section_bound(alg, rho)}
            verdict = iq.verdict(min(est.value - K1, K2 - est.value), est.error_estimate)
            doc = {"kappa": est.value, "error": est.error_estimate, "evaluations": est.evaluations, "method": est.method,
                   "direction": list(d["direction"]), "constants": consts}
            row = _row(sc, K1, est.value, est.error_estimate, verdict, est.value, constants=consts)
            return Result(row, {**doc, **sc.meta})
        po = sf.point_order(S, center)
        est = dn.metric_factor_characteristic(alg, rho, po, None if "method" not in d else cfg)
        consts = {"point_order": po.order, "layer": po.layer}
        notes = []
        if rho.kind == "koranyi" and po.psi_tilde is not None and po.psi_tilde.is_zero:
            n = alg.h // 2
            consts["radial_oracle"] = dn.radial_plane_factor(n)
            for i, v in enumerate(dn.plane_factor_reference_readings(n).values()):
                consts[f"reference_{i}"] = v
            notes.append("reference closed form O_{2n}/4n disagrees with the radial oracle; both recorded")
        doc = {"kappa": est.value, "error": est.error_estimate, "method": est.method, "empty": po.empty,
               "psi_tilde": po.psi_tilde.describe() if po.psi_tilde else "empty", "failing": [list(f) for f in po.failing],
               "constants": consts, "notes": notes}
        row = _row(sc, None, est.value, est.error_estimate, "reported", est.value, constants=consts)
        return Result(row, {**doc, **sc.meta})

    if chk == "constants":
        cb = dn.constants_bundle(alg, rho, S, int(d.get("directions", 16)), sc.seed)
        consts = cb.as_dict()
        flat = {k: v for k, v in consts.items() if not isinstance(v, list)}
        for i, c in enumerate(cb.c, start=2):
            flat[f"c_{i}"] = c
        holds = 0 < cb.K1 <= cb.K2 and abs(cb.C_dim - 2 * sum(cb.c)) <= 1e-15 * max(1.0, cb.C_dim)
        row = _row(sc, cb.K1, cb.K2, 0.0, "holds" if holds else "violated", cb.C_dim, constants=flat)
        return Result(row, {**consts, "notes": list(cb.notes), **sc.meta})

    if chk == "coarea":
        psi = None if d.get("psi", "one") == "one" else iq.TEST_FUNCTIONS[d["psi"]](float(d.get("scale", 1.0)))
        rep = iq.coarea_check(S, _coordinate(d["phi"], alg), psi, config=cfg)
        return _report_result(sc, rep)

    if chk == "divergence":
        rect = d.get("rect", {})
        rep = iq.divergence_check(S, _horizontal_field(d["field"], alg), rect.get("lo"), rect.get("hi"), config=cfg)
        return _report_result(sc, rep)

    if chk == "linear":
        rep = iq.linear_isoperimetric_check(S, center, float(d["r"]), cfg)
        return _report_result(sc, rep)

    if chk == "mu-ratio":
        rep = iq.mu_ratio(S, center, radii, cfg)
        res = _report_result(sc, rep, rep.rows[-1]["ratio"])
        res.profile = [{"t": r["t"], "ratio": r["ratio"], "error": r["error"]} for r in rep.rows]
        res.profile_columns = ("t", "ratio", "error")
        return res

    if chk == "monotonicity":
        rep = iq.monotonicity_profile(S, center, radii, cfg)
        res = _report_result(sc, rep, rep.terms["m_spread"])
        H0 = rep.constants["H0"]
        res.profile = [
            {"t": t, "m": m, "bound": m * math.exp(H0 * t)} for t, m in zip(rep.terms["radii"], rep.terms["m"])
        ]
        res.profile_columns = ("t", "m", "bound")
        return res

    if chk == "asymptotic":
        rep = iq.asymptotic_check(S, center, radii, cfg)
        res = _report_result(sc, rep)
        Q = alg.Q
        res.profile = [{"t": r["t"], "m": r["sigma_H"] / r["t"] ** (Q - 1), "bound": r["bound"] / r["t"] ** (Q - 1)} for r in rep.rows]
        res.profile_columns = ("t", "m", "bound")
        return res

    if chk == "isoperimetric":
        if "lengths" in d:
            rep = iq.thin_rectangle_probe(alg, rho, tuple(float(L) for L in d["lengths"]), cfg)
            res = _report_result(sc, rep, rep.rows[-1]["C_emp"])
            res.profile = [{"L": r["L"], "C_emp": r["C_emp"], "predicted": r["predicted"]} for r in rep.rows]
            res.profile_columns = ("L", "C_emp", "predicted")
            return res
        rep = iq.isoperimetric_check(S, cfg)
        return _report_result(sc, rep, rep.terms["C_emp"])

    if chk == "sobolev":
        psi = iq.TEST_FUNCTIONS[d.get("psi", "radial_bump")](float(d.get("scale", 1.0)))
        rep = iq.sobolev_check(S, psi, float(d.get("p", 1.0)), cfg)
        emp = rep.terms.get("C_emp")
        if emp is None:
            emp = next((v for k, v in sorted(rep.terms.items()) if k.startswith("C_emp_q")), None)
        return _report_result(sc, rep, emp)

    if chk == "char-scan":
        found = sf.characteristic_scan(S, sc.tol_char)
        doc = {"clusters": [{"chart": c.chart, "u": list(c.u), "pH": c.pH, "size": c.size} for c in found]}
        row = _row(sc, None, None, None, "reported", float(len(found)))
        return Result(row, {**doc, **sc.meta})

    raise MalformedInputError(f"unhandled check {chk!r}")  # pragma: no cover
