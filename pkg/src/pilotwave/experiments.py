"""Named end-to-end experiments. Each writes its artifacts and a report.json whose
``assertions`` list fully determines the pass/fail verdict."""

from __future__ import annotations

import json
import logging
import math
import operator
from pathlib import Path

import numpy as np

from . import ensemble as ens
from .config import ExperimentSpec
from .detection import (
    DetectorWindow,
    bm_coincidence_fraction,
    compare,
    ghose_p_star,
    marginal_ks_statistic,
    sqm_window_probability,
    verdict_record,
)
from .ergodicity import OBSERVABLES, diagonal_average, eq44_report, min_gap, random_mode_system, time_average

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"

# asymmetric pairs: neither window is the mirror image of the other
DEFAULT_COINCIDENCE_WINDOWS = (
    (DetectorWindow(1.0, 3.0), DetectorWindow(-12.0, 6.0)),
    (DetectorWindow(0.0, 3.0), DetectorWindow(3.0, 5.0)),
    (DetectorWindow(-2.0, 4.0), DetectorWindow(6.0, 8.0)),
    (DetectorWindow(2.0, 5.0), DetectorWindow(-5.0, 4.0)),
    (DetectorWindow(-10.0, 6.0), DetectorWindow(-4.0, 4.0)),
    (DetectorWindow(5.0, 5.0), DetectorWindow(10.0, 10.0)),
)
# both windows above the axis, where y1 + y2 = 0 forbids joint hits
DEFAULT_SAME_SIDE_WINDOWS = (DetectorWindow(0.5, 5.5), DetectorWindow(6.0, 10.0))

_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge, "==": operator.eq}


def assertion(name: str, value, op: str, threshold) -> dict:
    return {"name": name, "value": value, "op": op, "threshold": threshold,
            "passed": bool(_OPS[op](value, threshold))}


def evaluate_assertions(report: dict) -> bool:
    """Recompute every assertion from its stored value and threshold."""
    return all(_OPS[a["op"]](float(a["value"]), float(a["threshold"])) for a in report["assertions"])


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _write_report(out: Path, spec: ExperimentSpec, body: dict, assertions: list[dict]) -> dict:
    report = {
        "schema_version": SCHEMA_VERSION,
        "experiment": spec.name,
        "params": {k: getattr(spec.params, k) for k in ("hbar", "m", "sigma0", "Y", "ky", "t0")},
        "ignored_metadata": spec.ignored_metadata,
        **body,
        "assertions": assertions,
    }
    report = _json_safe(report)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=False) + "\n")
    return report


def _ensemble(spec: ExperimentSpec):
    return ens.sample(spec.ensemble, spec.params)


def _evolve(spec, points, t_final, workers, backend):
    return ens.evolve_ensemble(points, t_final, spec.integrator, spec.ensemble, spec.params,
                               workers=workers, backend=backend)


def run_equivariance(spec, out, workers, backend):
    p = spec.params
    pts = _ensemble(spec)
    half = _evolve(spec, pts, 0.5 * p.t0, workers, backend)
    full = _evolve(spec, half.points, p.t0, workers, backend)
    bound = ens.mc_bound(len(pts))
    d_half = ens.equivariance_distance(half, p)
    d_full = ens.equivariance_distance(full, p)
    ens.write_histogram_csv(out / "histogram_t_half.csv", half, p)
    ens.write_histogram_csv(out / "histogram_t0.csv", full, p)
    ens.write_arrivals_csv(out / "arrivals.csv", _chain(half, full))
    aborted = half.aborted_count + full.aborted_count
    body = {"n_pairs": len(pts), "bins": ens.HIST_BINS ** 2, "mc_bound": bound,
            "tv_t_half": d_half, "tv_t0": d_full, "aborted": aborted}
    return body, [
        assertion("tv_t_half_below_mc_bound", d_half, "<", bound),
        assertion("tv_t0_below_mc_bound", d_full, "<", bound),
        assertion("abort_fraction", aborted / len(pts), "<", ens.MAX_ABORT_FRACTION),
    ]


def _chain(first: ens.ArrivalSet, second: ens.ArrivalSet) -> ens.ArrivalSet:
    """Arrival set from t_start of ``first`` to the end of ``second`` (second evolves first's survivors)."""
    ok = first.completed
    y1 = first.y1.copy()
    y2 = first.y2.copy()
    status = first.status.copy()
    y1[ok], y2[ok], status[ok] = second.y1, second.y2, second.status
    return ens.ArrivalSet(first.y1_0, first.y2_0, y1, y2, second.t, status, first.t_start)


def run_coincidence(spec, out, workers, backend):
    p = spec.params
    pts = _ensemble(spec)
    arr = _evolve(spec, pts, p.t0, workers, backend)
    ens.write_arrivals_csv(out / "arrivals.csv", arr)
    pairs = (spec.windows,) if spec.windows else DEFAULT_COINCIDENCE_WINDOWS
    ks = marginal_ks_statistic(arr, p)
    records, checks = [], []
    for i, (w1, w2) in enumerate(pairs):
        v = compare(sqm_window_probability(w1, w2, p.t0, p), bm_coincidence_fraction(arr, w1, w2))
        records.append(verdict_record(w1, w2, v, ks))
        checks.append(assertion(f"window_{i}_abs_z", abs(v.z), "<=", 3.0))
    checks.append(assertion("marginal_ks_below_critical", ks.statistic, "<=", ks.critical))
    checks.append(assertion("abort_fraction", arr.aborted_count / len(pts), "<", ens.MAX_ABORT_FRACTION))
    return {"n_pairs": len(pts), "verdicts": records}, checks


def run_constrained(spec, out, workers, backend):
    p = spec.params
    pts = _ensemble(spec)
    ks0 = marginal_ks_statistic(pts, p)
    arr = _evolve(spec, pts, p.t0, workers, backend)
    ens.write_arrivals_csv(out / "arrivals.csv", arr)
    w1, w2 = spec.windows or DEFAULT_SAME_SIDE_WINDOWS
    ks = marginal_ks_statistic(arr, p)
    v = compare(sqm_window_probability(w1, w2, p.t0, p), bm_coincidence_fraction(arr, w1, w2))
    done = arr.points
    asym = float(np.max(np.abs(done.y1 + done.y2)))
    rec = verdict_record(w1, w2, v, ks)
    rec["disagrees"] = not v.agrees
    rec["ks_violation"] = ks.rejects
    body = {"n_pairs": len(pts), "max_abs_y1_plus_y2": asym, "ks_statistic_t0_initial": ks0.statistic,
            "ks_critical_initial": ks0.critical, "verdict": rec}
    return body, [
        assertion("antidiagonal_preserved", asym, "<", 1e-8 * p.sigma0),
        assertion("bm_same_side_hits", v.bm.hits, "==", 0),
        assertion("sqm_p_exceeds_0.01", v.sqm_p, ">", 0.01),
        assertion("disagreement_abs_z", abs(v.z), ">", 3.0),
        assertion("ks_violation_at_t0", ks.statistic, ">", ks.critical),
        assertion("ks_violation_initial", ks0.statistic, ">", ks0.critical),
        assertion("abort_fraction", arr.aborted_count / len(pts), "<", ens.MAX_ABORT_FRACTION),
    ]


def run_ghose_pstar(spec, out, workers, backend):
    p = spec.params
    pts = _ensemble(spec)
    arr = _evolve(spec, pts, p.t0, workers, backend)
    ens.write_arrivals_csv(out / "arrivals.csv", arr)
    est = ghose_p_star(arr, p)
    margin = (1.0 - est.value) / est.se
    body = {"n_pairs": est.n, "p_star": est.value, "se": est.se, "margin_in_se": margin}
    return body, [
        assertion("p_star_below_one_by_10_se", margin, ">", 10.0),
        assertion("abort_fraction", arr.aborted_count / len(pts), "<", ens.MAX_ABORT_FRACTION),
    ]


def run_spread(spec, out, workers, backend):
    p = spec.params
    pts = _ensemble(spec)
    with open(out / "samples.csv", "w") as fh:
        fh.write("pair_id,y1_0,y2_0\n")
        for i, (a, b) in enumerate(zip(pts.y1, pts.y2)):
            fh.write(f"{i},{float(a)!r},{float(b)!r}\n")
    spread = ens.com_spread(pts)
    expected = p.sigma0 / math.sqrt(2.0)
    se = expected / math.sqrt(2.0 * (len(pts) - 1))
    body = {"n_pairs": len(pts), "com_spread": spread, "expected": expected, "se": se,
            "z": (spread - expected) / se}
    return body, [assertion("com_spread_within_4_se", abs(spread - expected) / se, "<=", 4.0)]


def run_ergodicity_toy(spec, out, workers, backend):
    toy = spec.toy
    rng = np.random.default_rng(toy.seed)
    rows, systems, checks = [], [], []
    for k in range(toy.n_systems):
        x, F = random_mode_system(rng, toy.n_modes, toy.min_gap, toy.e_max)
        gap = min_gap(x)
        omega_max = float(np.ptp(x.energies)) / x.hbar
        diag = diagonal_average(x, F)
        T_final = toy.t_factor / gap
        for frac in (1e-3, 1e-2, 1e-1, 1.0):
            T = frac * T_final
            n = max(100, int(math.ceil(T * omega_max / (2 * math.pi) * toy.samples_per_period)) + 1)
            ta = time_average(x, F, T, n)
            rows.append((k, T, ta, diag))
        systems.append({"system": k, "min_gap": gap, "T": T_final, "time_avg": ta, "diagonal_avg": diag,
                        "abs_diff": abs(ta - diag)})
        checks.append(assertion(f"system_{k}_abs_diff", abs(ta - diag), "<", 1e-2))
    with open(out / "t_sweep.csv", "w") as fh:
        fh.write("system,T,time_avg,diagonal_avg\n")
        for k, T, ta, diag in rows:
            fh.write(f"{k},{T!r},{ta!r},{diag!r}\n")
    return {"systems": systems}, checks


def run_eq44(spec, out, workers, backend):
    p = spec.params
    reports, checks = [], []
    for obs in OBSERVABLES:
        for t in (0.0, 0.5 * p.t0, p.t0):
            r = eq44_report(obs, t, p)
            reports.append(r)
            checks.append(assertion(f"{obs}_t{t:g}_abs_diff", r["abs_diff"], "<", 1e-8))
            checks.append(assertion(f"{obs}_t{t:g}_sqm_imag", abs(r["sqm_imag"]), "<", 1e-10))
    return {"results": reports}, checks


RUNNERS = {
    "equivariance": run_equivariance,
    "coincidence": run_coincidence,
    "constrained": run_constrained,
    "ghose_pstar": run_ghose_pstar,
    "spread": run_spread,
    "ergodicity_toy": run_ergodicity_toy,
    "eq44": run_eq44,
}


def run(spec: ExperimentSpec, out_root: Path | None = None, workers: int = 1, backend: str | None = None):
    """Run one experiment into ``<out_root>/<name>/``; returns (passed, report)."""
    out = Path(out_root or spec.output_dir) / spec.name
    out.mkdir(parents=True, exist_ok=True)
    body, checks = RUNNERS[spec.name](spec, out, workers, backend)
    report = _write_report(out, spec, body, checks)
    return evaluate_assertions(report), report
