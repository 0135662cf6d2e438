"""Study reports: long-format rows with oracle values, provenance tags and
recomputable pass/fail flags.

Every row carries the rule its flag was computed with, so a reader (or a
test) can recompute the flag from (estimate, se, oracle, rule, tol) and
must get the stored value back.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

RULES = ("within_3se", "outside_3se", "exact", "decreasing", "below_tol", "at_least", "info")


def evaluate_rule(rule: str, estimate: float, se: float, oracle: float, tol: float) -> bool:
    err = abs(estimate - oracle)
    if rule == "within_3se":
        return bool(err <= 3.0 * se)
    if rule == "outside_3se":
        return bool(err > 3.0 * se)
    if rule == "exact":
        return bool(err <= tol)
    if rule == "below_tol":
        return bool(abs(estimate) <= tol)
    if rule == "decreasing":
        # estimate holds the successive difference; must be negative
        return bool(estimate < 0.0)
    if rule == "at_least":
        return bool(estimate >= tol)
    if rule == "info":
        return True
    raise ValueError(f"unknown rule {rule!r}")


@dataclass
class StudyReport:
    kind: str
    header: dict
    rows: list[dict] = field(default_factory=list)

    def add_row(self, *, tag: str, estimator: str, k: int, n: int, estimate: float,
                se: float, oracle: float, rule: str, tol: float = 0.0,
                nuisance_modes: str = "", provenance: str = "") -> None:
        passed = evaluate_rule(rule, estimate, se, oracle, tol)
        self.rows.append({
            "tag": tag, "estimator": estimator, "k": k, "n": n,
            "estimate": estimate, "se": se, "oracle": oracle,
            "abs_error": abs(estimate - oracle), "rule": rule, "tol": tol,
            "passed": passed, "nuisance_modes": nuisance_modes,
            "provenance": provenance,
        })

    @property
    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    @property
    def all_passed(self) -> bool:
        return all(r["passed"] for r in self.rows)

    def failed_rows(self) -> list[dict]:
        return [r for r in self.rows if not r["passed"]]

    def recompute_flags(self) -> list[bool]:
        return [evaluate_rule(r["rule"], r["estimate"], r["se"], r["oracle"], r["tol"])
                for r in self.rows]

    def write(self, outdir) -> None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(outdir / "report.csv", index=False, float_format="%.17g")
        summary = {
            "kind": self.kind,
            "header": self.header,
            "n_rows": len(self.rows),
            "all_passed": self.all_passed,
            "failed": [r["tag"] for r in self.failed_rows()],
        }
        (outdir / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True))

    def __str__(self) -> str:
        lines = [f"study={self.kind} rows={len(self.rows)} all_passed={self.all_passed}"]
        for r in self.rows:
            mark = "ok " if r["passed"] else "FAIL"
            se = f"{r['se']:.3g}" if not math.isnan(r["se"]) else "-"
            lines.append(
                f"  [{mark}] {r['tag']:40s} est={r['estimate']:+.6f} se={se} "
                f"oracle={r['oracle']:+.6f} rule={r['rule']}"
            )
        return "\n".join(lines)
