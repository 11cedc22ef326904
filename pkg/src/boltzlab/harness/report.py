"""Consolidated reporting over an experiment output directory.

Collects the per-experiment JSON artifacts, re-derives their pass/fail
verdicts, scans CSVs for non-finite rows, and writes one merged
``report.json`` plus a human-readable ``summary.txt``.
"""
from __future__ import annotations

import json
import math
import os

ARTIFACTS = ("assemble.json", "sweep.json", "decay.json", "simulate.json",
             "audit.json", "trilinear.json")


class MissingArtifactsError(FileNotFoundError):
    def __init__(self, missing):
        super().__init__("no experiment artifacts found; expected any of: "
                         + ", ".join(missing))
        self.missing = missing


def _scan_csv(path) -> list:
    """Row indices (1-based, excluding header) containing non-finite values."""
    bad = []
    with open(path) as fh:
        header = fh.readline()
        for i, line in enumerate(fh, start=1):
            for tok in line.strip().split(",")[0:]:
                try:
                    val = float(tok)
                except ValueError:
                    continue
                if not math.isfinite(val):
                    bad.append(i)
                    break
    return bad


def _verdicts(name: str, payload: dict) -> dict:
    checks = {}
    if name == "sweep.json":
        checks["lambda1_positive"] = payload.get("lambda1", 0.0) > 0.0
        checks["k0_positive"] = payload.get("k0_empirical", 0.0) > 0.0
    elif name == "decay.json":
        for e in payload.get("entries", []):
            tag = f"slope_sigma_{e['sigma']}"
            checks[tag] = bool(e["passed"]) and bool(e["reliable"])
            if e.get("micro_passed") is not None:
                checks[f"micro_{tag}"] = bool(e["micro_passed"])
    elif name == "simulate.json":
        checks["bounded_energy"] = payload.get("bound_ratio",
                                               float("inf")) <= 20.0
    elif name == "audit.json":
        ok_ratio = all(0.25 <= s["ratio_min"] and s["ratio_max"] <= 4.0
                       for s in payload.get("stats", []))
        ok_diss = all(s["diss_const_min"] > 0.0
                      for s in payload.get("stats", []))
        checks["equivalence_ratios"] = ok_ratio
        checks["dissipation_lower_bound"] = ok_diss
    elif name == "trilinear.json":
        fams = payload.get("ratios", {})
        finite = all(math.isfinite(entry["max_ratio"])
                     for fam in fams.values() for entry in fam.values())
        checks["ratios_finite"] = finite
    elif name == "assemble.json":
        checks["lambda0_positive"] = payload.get("lambda0", 0.0) > 0.0
    return checks


def consolidate(out_dir, write: bool = True) -> dict:
    found = {}
    for name in ARTIFACTS:
        path = os.path.join(out_dir, name)
        if os.path.exists(path):
            with open(path) as fh:
                found[name] = json.load(fh)
    if not found:
        raise MissingArtifactsError(list(ARTIFACTS))

    csv_flags = {}
    for entry in sorted(os.listdir(out_dir)):
        if entry.endswith(".csv"):
            bad = _scan_csv(os.path.join(out_dir, entry))
            if bad:
                csv_flags[entry] = bad

    experiments = {}
    for name, payload in found.items():
        checks = _verdicts(name, payload)
        invalid = any(flag for csv, flag in csv_flags.items()
                      if csv.startswith(name.split(".")[0]))
        experiments[name] = {
            "config_hash": payload.get("config_hash"),
            "checks": checks,
            "passed": all(checks.values()) and not invalid,
            "invalid_csv_rows": {csv: rows for csv, rows in csv_flags.items()
                                 if csv.startswith(name.split(".")[0])},
        }

    report = {
        "schema_version": 1,
        "experiments": experiments,
        "all_passed": all(e["passed"] for e in experiments.values()),
        "csv_flags": csv_flags,
    }
    if write:
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=1)
        lines = ["experiment           check                          verdict",
                 "-" * 62]
        for name, entry in sorted(experiments.items()):
            for check, ok in sorted(entry["checks"].items()):
                lines.append(f"{name:<20s} {check:<30s} "
                             f"{'pass' if ok else 'FAIL'}")
            if entry["invalid_csv_rows"]:
                lines.append(f"{name:<20s} {'csv_integrity':<30s} FAIL "
                             f"{entry['invalid_csv_rows']}")
        lines.append("-" * 62)
        lines.append("overall: " + ("pass" if report["all_passed"] else "FAIL"))
        with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return report
