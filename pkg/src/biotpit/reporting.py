"""Run records, speedup tables and CSV output.

Column order of the CSV is the field order of :class:`RunRecord`. Floats are
written with 9 significant digits, missing values as empty cells.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

ENGINES = ("sequential", "inverted", "pipeline")
FLOAT_FORMAT = "{:.9g}"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunRecord:
    case: str
    h: float
    tau: float
    n_time: int
    engine: str
    precond: str
    n_threads: int
    n_iter: int
    N_iter: int
    wall_seconds: float
    total_seconds: float
    max_residual: float
    mean_iterations: float
    l2_error_p: Optional[float] = None
    l2_error_u: Optional[float] = None
    E1: Optional[float] = None
    E2: Optional[float] = None
    E: Optional[float] = None
    mandel_cryer: str = ""
    timestamp: str = field(default_factory=_now)

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if not self.wall_seconds > 0:
            raise ValueError(f"wall_seconds must be positive, got {self.wall_seconds}")
        if self.max_residual < 0:
            raise ValueError(f"max_residual must be >= 0, got {self.max_residual}")
        if self.engine == "pipeline" and self.N_iter != self.n_threads * self.n_iter:
            raise ValueError(
                f"inconsistent schedule: N_iter={self.N_iter} != n_threads*n_iter={self.n_threads * self.n_iter}"
            )


COLUMNS = tuple(f.name for f in fields(RunRecord))
_TYPES = {f.name: f.type for f in fields(RunRecord)}


def _format(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return FLOAT_FORMAT.format(v)
    return str(v)


def _parse(name: str, text: str):
    kind = _TYPES[name]
    if "Optional" in kind and text == "":
        return None
    if "float" in kind:
        return float(text)
    if "int" in kind:
        return int(text)
    return text


def emit_csv(records, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
            w.writerow(COLUMNS)
            for rec in records:
                row = asdict(rec)
                w.writerow([_format(row[c]) for c in COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


def read_csv(path) -> list[RunRecord]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError(f"{path}: unexpected header {rows[0] if rows else None}")
    return [RunRecord(**{c: _parse(c, v) for c, v in zip(COLUMNS, row)}) for row in rows[1:]]


def rounded(rec: RunRecord) -> RunRecord:
    """The record as it reads back from a CSV (floats cut to 9 digits)."""
    return RunRecord(**{c: _parse(c, _format(v)) for c, v in asdict(rec).items()})


# --------------------------------------------------------------------------
# speedup


@dataclass(frozen=True)
class SpeedupRow:
    case: str
    h: float
    tau: float
    precond: str
    n_threads: int
    wall_seconds: float
    speedup: float
    efficiency: float
    E_model: Optional[float]
    flagged: bool  # efficiency above 1 by more than the noise margin


def speedup_table(records, noise_margin: float = 0.05) -> list[SpeedupRow]:
    """Speedup ``wall(1) / wall(k)`` per ``(case, h, tau, precond)`` group."""
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.case, r.h, r.tau, r.precond), []).append(r)
    rows = []
    for key, recs in groups.items():
        base = [r for r in recs if r.n_threads == 1]
        if not base:
            raise ValueError(f"no 1-thread baseline for case={key[0]} h={key[1]} tau={key[2]} precond={key[3]}")
        # prefer the pipeline engine at one thread, else whatever ran serially
        base.sort(key=lambda r: r.engine != "pipeline")
        w1 = base[0].wall_seconds
        for r in sorted(recs, key=lambda r: r.n_threads):
            s = 1.0 if r is base[0] else w1 / r.wall_seconds
            eff = s / r.n_threads
            rows.append(SpeedupRow(*key, r.n_threads, r.wall_seconds, s, eff, r.E, eff > 1 + noise_margin))
    return rows


def format_table(rows) -> str:
    lines = [f"{'threads':>7} {'wall[s]':>10} {'speedup':>8} {'eff':>6} {'E1*E2':>6}"]
    for r in rows:
        E = "" if r.E_model is None else f"{r.E_model:.3f}"
        flag = "  !" if r.flagged else ""
        lines.append(f"{r.n_threads:>7} {r.wall_seconds:>10.3f} {r.speedup:>8.2f} {r.efficiency:>6.3f} {E:>6}{flag}")
    return "\n".join(lines)


def summary(rec: RunRecord) -> str:
    parts = [f"{rec.case} h={rec.h:g} tau={rec.tau:g} n_time={rec.n_time}", f"engine={rec.engine}"]
    if rec.engine != "sequential":
        parts.append(f"threads={rec.n_threads} n_iter={rec.n_iter} N_iter={rec.N_iter}")
    parts.append(f"wall={rec.wall_seconds:.3f}s max_res={rec.max_residual:.2e}")
    if rec.l2_error_p is not None:
        parts.append(f"L2(p)={rec.l2_error_p:.8f}")
    if rec.mandel_cryer:
        parts.append(f"mandel-cryer={rec.mandel_cryer}")
    return " ".join(parts)


def isclose_record(a: RunRecord, b: RunRecord, rel: float = 5e-9) -> bool:
    for c in COLUMNS:
        x, y = getattr(a, c), getattr(b, c)
        if isinstance(x, float) and isinstance(y, float):
            if not math.isclose(x, y, rel_tol=rel, abs_tol=0.0):
                return False
        elif x != y:
            return False
    return True
