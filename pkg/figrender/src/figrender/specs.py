"""Plot specifications and CSV schema validation.

figrender consumes the primary component's flat-file exports only: vertex CSVs
(label, u[, sigma]) for heatmaps and long-format (x, y, group[, replica]) CSVs
for curves.  Missing columns fail loudly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

SCHEMA_VERSION = 1
KINDS = ("heatmap", "curve", "sweep")
FAMILIES = ("lattice", "comb", "torus", "gasket", "pipes")


class PlotSpecError(ValueError):
    """Invalid plot spec or input schema."""


@dataclass
class PlotSpec:
    kind: str
    input: str
    output: str
    family: str = "lattice"
    value: str = "u"
    colormap: str = "viridis"
    scale: str = "linear"
    format: str = "png"
    title: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotSpecError(f"unknown plot kind {self.kind!r}")
        if self.kind == "heatmap" and self.family not in FAMILIES:
            raise PlotSpecError(f"unknown graph family {self.family!r}")
        if self.scale not in ("linear", "log"):
            raise PlotSpecError(f"scale must be linear or log, not {self.scale!r}")
        if self.format not in ("png", "svg"):
            raise PlotSpecError(f"format must be png or svg, not {self.format!r}")

    @classmethod
    def from_json(cls, path) -> "PlotSpec":
        with open(path) as fh:
            obj = json.load(fh)
        if obj.pop("schema_version", None) != SCHEMA_VERSION:
            raise PlotSpecError("plot spec must declare schema_version: 1")
        known = {k: obj.pop(k) for k in
                 ("kind", "input", "output", "family", "value", "colormap",
                  "scale", "format", "title") if k in obj}
        return cls(**known, extras=obj)


def read_csv_columns(path, required) -> dict:
    """Read a CSV into column lists; missing required columns fail loudly."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotSpecError(f"{path}: empty CSV") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise PlotSpecError(f"{path}: missing columns {missing} (header {header})")
        cols = {name: [] for name in header}
        for row in reader:
            if len(row) != len(header):
                raise PlotSpecError(f"{path}: ragged row {row}")
            for name, val in zip(header, row):
                cols[name].append(val)
    return cols
