"""Result files: stable CSV tables, JSON records and static SVG plots.

Floats are written with ``repr`` so that parsing a CSV and writing it again
reproduces the same bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Sequence

SCAN_COLUMNS = ("lambda", "direction", "mu_hat", "stderr", "accepted", "replicas", "flags")
SHAPE_COLUMNS = ("lambda", "t", "direction", "radius", "stderr")
IDEM_COLUMNS = ("lambda", "lambda_prime", "S_size", "t", "p_hat", "stderr", "analytic_bound")

SCHEMAS = {"scan": SCAN_COLUMNS, "shape": SHAPE_COLUMNS, "idem": IDEM_COLUMNS}
SVG_KINDS = ("scan", "shape")


class EmitError(ValueError):
    pass


def fmt_float(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def fmt_vector(v) -> str:
    return " ".join(fmt_float(c) if isinstance(c, float) else str(int(c)) for c in v)


def parse_vector(s: str) -> tuple:
    parts = s.split()
    if all(p.lstrip("-").isdigit() for p in parts):
        return tuple(int(p) for p in parts)
    return tuple(float(p) for p in parts)


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return fmt_float(v)
    if isinstance(v, (tuple, list)):
        return fmt_vector(v)
    return str(v)


def table_to_csv(kind: str, rows: Sequence[dict]) -> str:
    """Render ``rows`` (dicts keyed by the schema columns) as CSV text."""
    if kind not in SCHEMAS:
        raise EmitError(f"no CSV schema for {kind!r}")
    cols = SCHEMAS[kind]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        missing = [c for c in cols if c not in r]
        if missing:
            raise EmitError(f"row lacks columns {missing}")
        w.writerow([_cell(r[c]) for c in cols])
    return buf.getvalue()


_INT_COLUMNS = {"accepted", "replicas", "S_size"}
_TEXT_COLUMNS = {"flags"}
_VECTOR_COLUMNS = {"direction"}


def csv_to_table(kind: str, text: str) -> list:
    """Parse CSV text written by ``table_to_csv`` back into row dicts."""
    cols = SCHEMAS[kind]
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != cols:
        raise EmitError(f"unexpected header {header}")
    out = []
    for rec in reader:
        row = {}
        for c, v in zip(cols, rec):
            if c in _INT_COLUMNS:
                row[c] = int(v)
            elif c in _TEXT_COLUMNS:
                row[c] = v
            elif c in _VECTOR_COLUMNS:
                row[c] = parse_vector(v)
            else:
                row[c] = float(v)
        out.append(row)
    return out


def scan_rows(table) -> list:
    rows = []
    for r in table.rows:
        e = r.estimate
        rows.append(
            {
                "lambda": float(r.lam),
                "direction": tuple(r.direction),
                "mu_hat": float(e.value),
                "stderr": float(e.stderr),
                "accepted": int(e.accepted),
                "replicas": int(e.replicas),
                "flags": ";".join(e.flags),
            }
        )
    return rows


def shape_rows(shapes) -> list:
    rows = []
    for s in shapes:
        for u, r, se in zip(s.directions, s.radii, s.stderrs):
            rows.append(
                {
                    "lambda": float(s.lam),
                    "t": float(s.t),
                    "direction": tuple(float(c) for c in u),
                    "radius": float(r),
                    "stderr": float(se),
                }
            )
    return rows


def idem_row(est, lam, lam_prime) -> dict:
    return {
        "lambda": float(lam),
        "lambda_prime": float(lam_prime),
        "S_size": int(est.info["S_size"]),
        "t": float(est.info["t"]),
        "p_hat": float(est.value),
        "stderr": float(est.stderr),
        "analytic_bound": float(est.info["analytic_bound"]),
    }


def to_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    if hasattr(obj, "item") and callable(obj.item):
        return obj.item()
    return obj


# ---------------------------------------------------------------- SVG

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _svg_doc(width, height, body):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n' + "".join(body) + "</svg>\n"
    )


def _finite(vals):
    return [v for v in vals if math.isfinite(v)]


def scan_svg(rows: Sequence[dict], width=480, height=320) -> str:
    """mu_hat against lambda, one polyline (with error bars) per direction."""
    pad = 40
    series = {}
    for r in rows:
        series.setdefault(tuple(r["direction"]), []).append(r)
    xs = _finite([r["lambda"] for r in rows]) or [0.0, 1.0]
    ys = _finite([r["mu_hat"] + k * r["stderr"] for r in rows for k in (-1, 1)])
    ys = ys or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(0.0, min(ys)), max(ys)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def X(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def Y(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    body = [
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>\n',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n',
        f'<text x="{width / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">lambda</text>\n',
        f'<text x="12" y="{height / 2:.1f}" font-size="12" transform="rotate(-90 12 {height / 2:.1f})">mu_hat</text>\n',
    ]
    for i, (direction, rs) in enumerate(sorted(series.items())):
        color = _PALETTE[i % len(_PALETTE)]
        pts = [(r["lambda"], r["mu_hat"], r["stderr"]) for r in rs if math.isfinite(r["mu_hat"])]
        if pts:
            path = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b, _ in pts)
            body.append(f'<polyline points="{path}" fill="none" stroke="{color}"/>\n')
        for a, b, s in pts:
            if math.isfinite(s):
                body.append(
                    f'<line x1="{X(a):.2f}" y1="{Y(b - s):.2f}" x2="{X(a):.2f}" '
                    f'y2="{Y(b + s):.2f}" stroke="{color}"/>\n'
                )
        label = fmt_vector(direction)
        body.append(f'<text x="{width - pad}" y="{pad + 14 * i}" font-size="11" text-anchor="end" fill="{color}">x = ({label})</text>\n')
    return _svg_doc(width, height, body)


def shape_svg(rows: Sequence[dict], width=400, height=400) -> str:
    """Two-dimensional outlines, one closed polyline per lambda."""
    groups = {}
    for r in rows:
        if len(r["direction"]) != 2:
            raise EmitError("shape outlines need two-dimensional directions")
        groups.setdefault(r["lambda"], []).append(r)
    pts_all = []
    outlines = []
    for lam, rs in sorted(groups.items()):
        pts = []
        for r in rs:
            u = r["direction"]
            pts.append((u[0] * r["radius"], u[1] * r["radius"]))
        pts.sort(key=lambda p: math.atan2(p[1], p[0]))
        outlines.append((lam, pts))
        pts_all += pts
    m = max((max(abs(a), abs(b)) for a, b in pts_all if math.isfinite(a) and math.isfinite(b)), default=1.0) or 1.0
    scale = (min(width, height) / 2 - 30) / m
    cx, cy = width / 2, height / 2
    body = [
        f'<line x1="0" y1="{cy}" x2="{width}" y2="{cy}" stroke="#ccc"/>\n',
        f'<line x1="{cx}" y1="0" x2="{cx}" y2="{height}" stroke="#ccc"/>\n',
    ]
    for i, (lam, pts) in enumerate(outlines):
        color = _PALETTE[i % len(_PALETTE)]
        closed = pts + pts[:1]
        path = " ".join(f"{cx + a * scale:.2f},{cy - b * scale:.2f}" for a, b in closed)
        body.append(f'<polyline class="outline" points="{path}" fill="none" stroke="{color}"/>\n')
        body.append(f'<text x="8" y="{16 + 14 * i}" font-size="11" fill="{color}">lambda = {fmt_float(lam)}</text>\n')
    return _svg_doc(width, height, body)


def emit(kind: str, rows: Sequence[dict], fmt: str) -> str:
    """Render a result table in ``fmt`` (csv, json or svg)."""
    if fmt == "csv":
        return table_to_csv(kind, rows)
    if fmt == "json":
        return to_json(list(rows))
    if fmt == "svg":
        if kind == "scan":
            return scan_svg(rows)
        if kind == "shape":
            return shape_svg(rows)
        raise EmitError(f"svg is only available for {SVG_KINDS}")
    raise EmitError(f"unknown format {fmt!r}")
