"""Deterministic CSV and markdown report emission.

CSV bodies are byte-reproducible: a fixed versioned schema, `repr`-exact
float formatting, and no timestamps (wall-clock lives in the manifest).
Every row carries the experiment id, config hash, seed, and tolerance so
no number is orphaned from its provenance.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from typing import Sequence

CSV_SCHEMA_VERSION = 1
CSV_FIELDS = ("experiment", "config_hash", "seed", "check",
              "tolerance", "value", "residual", "passed")

__all__ = [
    "CSV_SCHEMA_VERSION",
    "CSV_FIELDS",
    "CheckRow",
    "config_hash",
    "render_csv",
    "render_manifest",
]


@dataclass(frozen=True)
class CheckRow:
    experiment: str
    config_hash: str
    seed: int
    check: str
    tolerance: float
    value: float
    residual: float
    passed: bool

    def as_record(self) -> dict:
        return {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "check": self.check,
            "tolerance": repr(self.tolerance),
            "value": repr(float(self.value)),
            "residual": repr(float(self.residual)),
            "passed": "pass" if self.passed else "FAIL",
        }


def config_hash(cfg: dict) -> str:
    """sha256 of the canonical (sorted-key, compact) JSON serialization."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def render_csv(rows: Sequence[CheckRow]) -> str:
    buf = io.StringIO()
    buf.write(f"# robustdual report schema v{CSV_SCHEMA_VERSION}: "
              + ",".join(CSV_FIELDS) + "\n")
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row.as_record())
    return buf.getvalue()


def render_manifest(experiment: str, cfg_hash: str, seed: int,
                    tolerances: dict, rows: Sequence[CheckRow],
                    wall_clock: float, version: str) -> str:
    n_pass = sum(r.passed for r in rows)
    lines = [
        f"# Run manifest: {experiment}",
        "",
        f"- artifact version: {version}",
        f"- config hash: `{cfg_hash}`",
        f"- seed: {seed}",
        f"- wall clock: {wall_clock:.2f} s",
        f"- checks passed: {n_pass}/{len(rows)}",
        "",
        "## Tolerances",
        "",
    ]
    for key, val in sorted(tolerances.items()):
        lines.append(f"- {key}: {val}")
    lines += ["", "## Checks", ""]
    for r in rows:
        mark = "PASS" if r.passed else "FAIL"
        lines.append(f"- [{mark}] {r.check}: residual {r.residual:.3e} "
                     f"(tolerance {r.tolerance:g})")
    lines.append("")
    return "\n".join(lines)
