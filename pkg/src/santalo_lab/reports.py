"""Verification reports: per-check records, JSON and CSV output."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

__all__ = ["SCHEMA_VERSION", "Check", "Report", "to_jsonable"]

SCHEMA_VERSION = "1.0"


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings ``"inf"``, ``"-inf"``, ``"nan"``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return str(obj)


@dataclass
class Check:
    """One verified relation ``lhs (op) rhs``.

    ``residual`` is ``lhs - rhs`` for inequalities and ``|lhs - rhs|`` for
    closeness checks.
    """

    name: str
    lhs: float
    rhs: float
    residual: float
    passed: bool
    witnesses: list = field(default_factory=list)

    @classmethod
    def leq(cls, name: str, lhs: float, rhs: float, tol: float = 0.0, witness=None) -> "Check":
        """``lhs <= rhs + tol``."""
        lhs, rhs = float(lhs), float(rhs)
        ok = lhs <= rhs + tol
        return cls(name, lhs, rhs, lhs - rhs, bool(ok), [] if witness is None or ok else [witness])

    @classmethod
    def geq(cls, name: str, lhs: float, rhs: float, tol: float = 0.0, witness=None) -> "Check":
        """``lhs >= rhs - tol``."""
        lhs, rhs = float(lhs), float(rhs)
        ok = lhs >= rhs - tol
        return cls(name, lhs, rhs, lhs - rhs, bool(ok), [] if witness is None or ok else [witness])

    @classmethod
    def close(cls, name: str, lhs: float, rhs: float, rtol: float = 0.0, atol: float = 0.0,
              witness=None) -> "Check":
        lhs, rhs = float(lhs), float(rhs)
        res = abs(lhs - rhs)
        ok = res <= atol + rtol * abs(rhs)
        return cls(name, lhs, rhs, res, bool(ok), [] if witness is None or ok else [witness])

    @classmethod
    def truth(cls, name: str, ok: bool, witness=None) -> "Check":
        return cls(name, float(bool(ok)), 1.0, 0.0 if ok else -1.0, bool(ok),
                   [] if witness is None or ok else [witness])

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "residual": self.residual,
                "pass": self.passed, "witnesses": self.witnesses}

    @classmethod
    def from_dict(cls, d: dict) -> "Check":
        # float() also parses the "inf"/"nan" strings written by to_jsonable
        return cls(d["name"], float(d["lhs"]), float(d["rhs"]), float(d["residual"]), bool(d["pass"]),
                   list(d.get("witnesses", [])))


@dataclass
class Report:
    experiment: str
    kind: str
    checks: list = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    error: Optional[str] = None
    timestamp: Optional[str] = None

    def add(self, check: Check) -> None:
        self.checks.append(check)

    def extend(self, checks) -> None:
        self.checks.extend(checks)

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.checks) and all(c.passed for c in self.checks)

    def to_dict(self, timestamp: bool = True) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "kind": self.kind,
            "pass": self.passed,
            "n_checks": len(self.checks),
            "n_failed": sum(not c.passed for c in self.checks),
            "environment": self.environment,
            "checks": [c.to_dict() for c in self.checks],
        }
        if self.error is not None:
            d["error"] = self.error
        if timestamp:
            d["timestamp"] = self.timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat()
        return to_jsonable(d)

    def to_json(self, timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(timestamp), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write(self, out_dir) -> tuple:
        """Write ``report.json`` and ``report.csv``; returns both paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        jpath, cpath = out / "report.json", out / "report.csv"
        jpath.write_text(self.to_json())
        with cpath.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["experiment", "name", "lhs", "rhs", "residual", "pass", "witnesses"])
            for c in self.checks:
                d = to_jsonable(c.to_dict())
                w.writerow([self.experiment, d["name"], d["lhs"], d["rhs"], d["residual"], d["pass"],
                            json.dumps(d["witnesses"], sort_keys=True)])
        return jpath, cpath

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{self.experiment} [{self.kind}]: {status} "
                 f"({len(self.checks) - sum(not c.passed for c in self.checks)}/{len(self.checks)} checks)"]
        for c in self.checks:
            if not c.passed:
                lines.append(f"  failed {c.name}: lhs={c.lhs:.6g} rhs={c.rhs:.6g} residual={c.residual:.3g}")
        if self.error:
            lines.append(f"  error: {self.error}")
        return "\n".join(lines)
