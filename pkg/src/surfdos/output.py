"""Writing study outputs: CSV table, JSON manifest, optional SVG plot."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .sds import CSV_COLUMNS, StudyReport

__all__ = ["atomic_write", "format_value", "rows_to_csv", "emit_outputs", "version_string"]


def version_string() -> str:
    from . import __version__

    return f"v{__version__}"


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temp file in the same directory."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def format_value(v) -> str:
    """Stable text form: ``repr`` for floats (round-trips exactly), blank for ``None``."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([format_value(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _plot(report: StudyReport, path: Path) -> Path | None:
    """Mean with min/max spread of every ``kind`` against ``L``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups: dict = {}
    for r in report.rows:
        if r["L"] is None or r["value"] is None:
            continue
        groups.setdefault(r["kind"], {}).setdefault(float(r["L"]), []).append(float(r["value"]))
    groups = {k: v for k, v in groups.items() if len(v) > 1}
    if not groups:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    for kind in sorted(groups)[:12]:
        Ls = sorted(groups[kind])
        vals = [np.asarray(groups[kind][L]) for L in Ls]
        mean = [v.mean() for v in vals]
        ax.plot(Ls, mean, marker="o", label=kind)
        ax.fill_between(Ls, [v.min() for v in vals], [v.max() for v in vals], alpha=0.2)
    ax.set_xlabel("L")
    ax.set_ylabel("value")
    ax.set_title(report.study)
    ax.legend(fontsize=6)
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return atomic_write(path, buf.getvalue())


def emit_outputs(
    report: StudyReport,
    out_dir,
    stem: str,
    config_echo: str,
    wall_time: float,
    plot: bool = False,
    extra: dict | None = None,
) -> dict:
    """Write ``<stem>.csv`` (if there are rows), ``<stem>.manifest.json`` and optionally ``<stem>.svg``."""
    out_dir = Path(out_dir)
    files = {}
    if report.rows:
        files["csv"] = str(atomic_write(out_dir / f"{stem}.csv", rows_to_csv(report.rows)))
    if plot and report.rows:
        svg = _plot(report, out_dir / f"{stem}.svg")
        if svg is not None:
            files["svg"] = str(svg)
    manifest = {
        "study": report.study,
        "version": version_string(),
        "wall_time_s": round(wall_time, 3),
        "passed": report.passed,
        "checks": report.checks,
        "stats": report.stats,
        "notes": report.notes,
        "rows": len(report.rows),
        "config": config_echo,
    }
    if extra:
        manifest.update(extra)
    text = json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n"
    files["manifest"] = str(atomic_write(out_dir / f"{stem}.manifest.json", text))
    return files
