"""Run reports: JSON serialisation and the printed design table."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .config import SCHEMA_VERSION

WALL_TIME = "wall_time"


def _finite_or_none(v) -> float | None:
    if v is None:
        return None
    v = float(v)
    return v if np.isfinite(v) else None


def _rows(a) -> list | None:
    if a is None:
        return None
    return np.asarray(a, dtype=float).tolist()


@dataclass
class RunReport:
    """Everything a run produced.

    ``design`` holds ``points`` with either ``weights`` (approximate) or
    ``counts`` (exact). Infinite distances are stored as null.
    """

    task: str
    factors: list[str]
    design: dict | None = None
    m: int | None = None
    det: float | None = None
    log_det: float | None = None
    convergence: bool | None = None
    min_diff: float | None = None
    x_close: list | None = None
    itmax: int | None = None
    max_sensitivity: float | None = None
    ni: list[int] | None = None
    N: int | None = None
    rel_efficiency: float | None = None
    info: list | None = None
    warnings: list[str] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RunReport:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> RunReport:
        return cls.from_dict(json.loads(text))

    def write(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def without_wall_time(self) -> str:
        """JSON text with the wall-time field removed (for reproducibility checks)."""
        d = self.to_dict()
        d["provenance"] = {k: v for k, v in d["provenance"].items() if k != WALL_TIME}
        return json.dumps(d, indent=2, allow_nan=False) + "\n"


def approximate_block(xi) -> dict:
    return {"points": _rows(xi.points), "weights": np.asarray(xi.weights, dtype=float).tolist()}


def exact_block(xi) -> dict:
    return {"points": _rows(xi.points), "counts": [int(n) for n in xi.counts]}


def display_allocations(weights, digits: int = 4) -> np.ndarray:
    """Weights rounded to ``digits`` decimals so that they still sum to one.

    Units of 10^-digits are apportioned by largest remainders, so each shown
    value is within one unit of the true weight.
    """
    scale = 10**digits
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    units = w * scale
    n = np.floor(units).astype(np.int64)
    order = np.argsort(-(units - n), kind="stable")
    n[order[: scale - int(n.sum())]] += 1
    return n / scale


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def design_table(names: list[str], design: dict) -> str:
    """'Design Output' block: Count, one column per factor, Allocation (and ni)."""
    pts = np.asarray(design["points"], dtype=float)
    exact = "counts" in design
    if exact:
        counts = np.asarray(design["counts"], dtype=np.int64)
        alloc = display_allocations(counts / counts.sum())
    else:
        alloc = display_allocations(design["weights"])
    header = ["Count", *names, "Allocation"] + (["ni"] if exact else [])
    body = []
    for i, x in enumerate(pts):
        row = [str(i + 1), *(_fmt(v) for v in x), _fmt(alloc[i])]
        if exact:
            row.append(str(int(counts[i])))
        body.append(row)
    widths = [max(len(h), *(len(r[j]) for r in body)) for j, h in enumerate(header)]
    line = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))  # noqa: E731
    rule = len(line(header))
    out = ["Design Output", "=" * rule, line(header), "-" * rule]
    out += [line(r) for r in body]
    out.append("=" * rule)
    return "\n".join(out)


def _scalar(v: Any) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, float):
        return f"{v:.7g}"
    return str(v)


def render(report: RunReport) -> str:
    """Human-readable text for standard output."""
    out = []
    if report.design is not None:
        out += [design_table(report.factors, report.design), ""]
    if report.info is not None:
        F = np.asarray(report.info)
        out.append("Fisher information:")
        out += ["  " + "  ".join(f"{v: .6e}" for v in row) for row in F]
        out.append("")
    for key in ("m", "det", "convergence", "min_diff", "itmax", "N", "rel_efficiency"):
        v = getattr(report, key)
        if v is not None or key in ("min_diff",) and report.convergence is not None:
            out.append(f"{key.replace('_', '.')}: {_scalar(v)}")
    if report.x_close is not None:
        pair = ", ".join("(" + ", ".join(f"{v:.4f}" for v in x) + ")" for x in report.x_close)
        out.append(f"x.close: {pair}")
    if report.ni is not None:
        out.append("ni.design: " + " ".join(str(n) for n in report.ni))
    for w in report.warnings:
        out.append(f"warning: {w}")
    return "\n".join(out) + "\n"
