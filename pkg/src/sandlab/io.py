"""Flat-file exports: vertex CSVs, record CSVs, and nested JSON."""

from __future__ import annotations

import csv
import json

from .experiments import RECORD_FIELDS


def write_vertex_csv(path, graph, columns: dict):
    """CSV with a label column plus the given per-vertex arrays."""
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + names)
        for v in range(graph.n):
            w.writerow([graph.label(v)] + [repr(float(columns[c][v])) for c in names])


def write_value_table_csv(path, graph, table):
    """Long-format value table: (label, k, v)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "k", "v"])
        for k in range(table.horizon + 1):
            row = table.v[k]
            for v in range(graph.n):
                w.writerow([graph.label(v), k, repr(float(row[v]))])


def write_curve_csv(path, rows, header=("x", "y", "group")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for row in rows:
            w.writerow(list(row))


def write_payoff_samples_csv(path, samples, meta: dict):
    """Stream stopped-payoff samples: one (replica, payoff) row per walk."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replica", "payoff"] + sorted(meta))
        tail = [meta[k] for k in sorted(meta)]
        for i, s in enumerate(samples):
            w.writerow([i, repr(float(s))] + tail)


def write_records_csv(path, records):
    """Fixed-header long-format experiment records."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS)
        for rec in records:
            w.writerow(rec.row())


def write_records_json(path, records, extra=None):
    payload = {"schema_version": 1,
               "records": [dict(zip(RECORD_FIELDS, rec.row())) for rec in records]}
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
