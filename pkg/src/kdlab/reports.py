"""Deterministic JSON / CSV / SVG emission for every report kind, plus run manifests."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from kdlab import __version__, svg

SCHEMA = "kdlab.report/1"
MANIFEST_SCHEMA = "kdlab.manifest/1"
FORMATS = ("json", "csv", "svg")


@dataclass
class TableReport:
    """Generic rows-and-summary report used by the experiment drivers."""

    kind: str
    columns: list[str]
    rows: list[list[Any]]
    summary: dict[str, Any] = field(default_factory=dict)
    chart: dict[str, Any] | None = None   # {"type": "bars"|"panels", ...}

    def to_dict(self) -> dict:
        return {"summary": self.summary, "columns": self.columns, "rows": self.rows}

    def csv_rows(self):
        return self.columns, self.rows


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def report_json(report) -> str:
    return dumps({"schema": SCHEMA, "kind": report.kind, "version": __version__,
                  "data": report.to_dict()})


def load_report(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"{path}: not a {SCHEMA} document")
    return doc


def report_csv(report) -> str:
    head, rows = report.csv_rows()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _svg_and_table(report):
    """(svg text, header, rows) of the chart for a report, or None if unsupported."""
    kind = report.kind
    if kind == "complexity":
        if report.hist is not None:
            h = report.hist
            rows = [[float(a), float(b), int(c), float(d)]
                    for a, b, c, d in zip(h.edges[:-1], h.edges[1:], h.counts, h.densities)]
            return (svg.histogram_chart(h.edges, h.densities, "sentence entropy (density)"),
                    ["lo", "hi", "count", "density"], rows)
        words = list(report.word_entropy)
        vals = [report.word_entropy[w] for w in words]
        return svg.bar_chart(words, vals, f"C = {report.value:.4f}"), ["word", "entropy"], \
            [[w, v] for w, v in zip(words, vals)]
    if kind == "faithfulness":
        words = list(report.word_kl)
        vals = [report.word_kl[w] for w in words]
        return svg.bar_chart(words, vals, f"F = {report.value:.4f}"), ["word", "kl"], \
            [[w, v] for w, v in zip(words, vals)]
    if kind == "reordering":
        from kdlab.metrics import histogram
        h = histogram(report.scores, bins=10, range=(0.0, 1.0))
        rows = [[float(a), float(b), int(c), float(d)]
                for a, b, c, d in zip(h.edges[:-1], h.edges[1:], h.counts, h.densities)]
        return (svg.histogram_chart(h.edges, h.densities, f"reordering, mean {report.mean:.4f}"),
                ["lo", "hi", "count", "density"], rows)
    if kind == "simplex":
        head, rows = report.csv_rows()
        if report.coords is not None:
            return svg.ternary_chart(report.coords, report.labels, report.argmax), head, rows
        return svg.bar_chart(report.labels, [report.counts[l] for l in report.labels],
                             "sentences per argmax language"), head, rows
    if kind == "winrate":
        labels, vals = [], []
        for metric, wins in (("tacc", report.wins_tacc), ("sacc", report.wins_sacc)):
            for v, n in wins.items():
                labels.append(f"{metric}:{v}")
                vals.append(n / report.seeds)
        return svg.bar_chart(labels, vals, "win rate"), ["bar", "rate"], \
            [[l, v] for l, v in zip(labels, vals)]
    chart = getattr(report, "chart", None)
    if chart is not None:
        if chart["type"] == "panels":
            specs = chart["panels"]
            rows = [[p[0], lab, val] for p in specs for lab, val in zip(p[1], p[2])]
            return svg.panels(specs, chart.get("title", "")), ["panel", "label", "value"], rows
        if chart["type"] == "bars":
            return svg.bar_chart(chart["labels"], chart["values"], chart.get("title", "")), \
                ["label", "value"], [[l, v] for l, v in zip(chart["labels"], chart["values"])]
    return None


def emit_report(report, fmt: str, path) -> list[Path]:
    """Write ``report`` as json, csv or svg; svg also writes a sibling ``.dat`` table.

    Returns the paths written.
    """
    path = Path(path)
    if fmt == "json":
        text = report_json(report)
    elif fmt == "csv":
        text = report_csv(report)
    elif fmt == "svg":
        res = _svg_and_table(report)
        if res is None:
            raise ValueError(f"no SVG rendering for report kind {report.kind!r}")
        text, head, rows = res
        dat = path.with_suffix(".dat")
        _write(dat, svg.dat_table(head, rows))
        _write(path, text)
        return [path, dat]
    else:
        raise ValueError(f"unsupported format {fmt!r}; choose from {FORMATS}")
    _write(path, text)
    return [path]


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


@dataclass
class RunManifest:
    subcommand: str
    argv: list[str]
    config: dict[str, Any]
    inputs: dict[str, str]          # path -> sha256
    seed: int
    version: str = __version__
    outputs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"schema": MANIFEST_SCHEMA, "subcommand": self.subcommand, "version": self.version,
                "seed": self.seed, "argv": self.argv, "config": self.config,
                "inputs": self.inputs, "outputs": self.outputs}

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        if d.get("schema") != MANIFEST_SCHEMA:
            raise ValueError("not a run manifest")
        return cls(d["subcommand"], list(d["argv"]), d["config"], d["inputs"], d["seed"],
                   d["version"], list(d.get("outputs", [])))

    def save(self, path) -> None:
        _write(Path(path), dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
