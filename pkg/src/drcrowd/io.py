"""Versioned text formats for worker pools, fitted model parameters, and
annotation/label CSV files. All CSV labels and ids are 1-based; in-memory
arrays are 0-based."""

from __future__ import annotations

import csv

import numpy as np

from .core import AnnotationMatrix, ConfusionMatrix, DSParams, ProblemDims
from .errors import ParseError

WORKERS_MAGIC = "# drc-workers v1"
DSPARAMS_MAGIC = "# drc-dsparams v1"
ANNOTATION_HEADER = ["worker_id", "item_id", "label"]
LABELS_HEADER = ["item_id", "label"]


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_matrix(fh, table: np.ndarray) -> None:
    for row in table:
        fh.write(" ".join(_fmt(v) for v in row) + "\n")


def _read_floats(lines, count: int, what: str) -> np.ndarray:
    lineno, line = next(lines)
    parts = line.split()
    if len(parts) != count:
        raise ParseError(f"expected {count} {what} values, got {len(parts)}", line=lineno)
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise ParseError(f"bad {what} value", line=lineno) from None


def _content_lines(fh):
    for lineno, raw in enumerate(fh, start=1):
        line = raw.strip()
        if line:
            yield lineno, line


def write_workers(path, confusions) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(WORKERS_MAGIC + "\n")
        fh.write(f"{len(confusions)} {confusions[0].k}\n")
        for conf in confusions:
            _write_matrix(fh, conf.table)


def read_workers(path) -> list[ConfusionMatrix]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = _content_lines(fh)
        lineno, magic = next(lines, (0, ""))
        if magic != WORKERS_MAGIC.strip():
            raise ParseError(f"bad magic {magic!r}, expected {WORKERS_MAGIC!r}", line=lineno or 1)
        lineno, header = next(lines, (0, ""))
        try:
            m, k = (int(p) for p in header.split())
        except ValueError:
            raise ParseError("expected '<m> <k>' header", line=lineno) from None
        out = []
        for _ in range(m):
            rows = [_read_floats(lines, k, "confusion") for _ in range(k)]
            out.append(ConfusionMatrix(np.stack(rows, axis=0)))
        return out


def write_dsparams(path, params: DSParams) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(DSPARAMS_MAGIC + "\n")
        fh.write(f"{params.m} {params.k}\n")
        fh.write(" ".join(_fmt(v) for v in params.prior) + "\n")
        for conf in params.confusions:
            _write_matrix(fh, conf.table)


def read_dsparams(path) -> DSParams:
    with open(path, "r", encoding="utf-8") as fh:
        lines = _content_lines(fh)
        lineno, magic = next(lines, (0, ""))
        if magic != DSPARAMS_MAGIC.strip():
            raise ParseError(f"bad magic {magic!r}, expected {DSPARAMS_MAGIC!r}", line=lineno or 1)
        lineno, header = next(lines, (0, ""))
        try:
            m, k = (int(p) for p in header.split())
        except ValueError:
            raise ParseError("expected '<m> <k>' header", line=lineno) from None
        prior = _read_floats(lines, k, "prior")
        confusions = []
        for _ in range(m):
            rows = [_read_floats(lines, k, "confusion") for _ in range(k)]
            confusions.append(ConfusionMatrix(np.stack(rows, axis=0)))
        return DSParams(prior=prior, confusions=tuple(confusions))


def write_annotations(path, ann: AnnotationMatrix) -> None:
    workers, items, labels = ann.triplets()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ANNOTATION_HEADER)
        for i, j, lab in zip(workers, items, labels):
            writer.writerow([int(i) + 1, int(j) + 1, int(lab) + 1])


def read_annotations(path, dims: ProblemDims | None = None) -> AnnotationMatrix:
    """Read the annotation CSV; dims are inferred from the maxima unless
    given explicitly (give them when some workers/items never appear)."""
    workers, items, labels = [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ANNOTATION_HEADER:
            raise ParseError(f"expected header {','.join(ANNOTATION_HEADER)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                i, j, lab = (int(p) for p in row)
            except ValueError:
                raise ParseError(f"bad annotation row {row!r}", line=lineno) from None
            if i < 1 or j < 1 or lab < 1:
                raise ParseError("ids and labels are 1-based", line=lineno)
            workers.append(i - 1)
            items.append(j - 1)
            labels.append(lab - 1)
    if not workers:
        raise ParseError("no annotations found")
    if dims is None:
        dims = ProblemDims(n=max(items) + 1, m=max(workers) + 1, k=max(max(labels) + 1, 2))
    return AnnotationMatrix.from_triplets(
        np.array(workers), np.array(items), np.array(labels), dims
    )


def write_labels(path, labels: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABELS_HEADER)
        for j, lab in enumerate(labels):
            writer.writerow([j + 1, int(lab) + 1])


def read_labels(path) -> np.ndarray:
    out = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != LABELS_HEADER:
            raise ParseError(f"expected header {','.join(LABELS_HEADER)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                j, lab = (int(p) for p in row)
            except ValueError:
                raise ParseError(f"bad label row {row!r}", line=lineno) from None
            out[j - 1] = lab - 1
    if not out or sorted(out) != list(range(len(out))):
        raise ParseError("labels must cover items 1..n")
    return np.array([out[j] for j in range(len(out))], dtype=np.int64)
