"""Reader/writer for the sparse libsvm text format.

Each nonempty line is ``<label> <index>:<value> ...`` with strictly
increasing 1-based feature indices. Class labels are remapped to contiguous
0-based indices preserving the sorted order of the original values; the
remap table (original value per class index) is returned alongside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import FeatureMatrix
from ..errors import ParseError


@dataclass(frozen=True)
class Dataset:
    features: FeatureMatrix
    labels: np.ndarray
    classes: tuple[float, ...]

    @property
    def n(self) -> int:
        return self.features.n

    @property
    def d(self) -> int:
        return self.features.d

    @property
    def k(self) -> int:
        return len(self.classes)


def parse_libsvm(lines) -> Dataset:
    """Parse an iterable of libsvm lines into a dense dataset."""
    raw_labels = []
    rows = []
    d = 0
    lineno = 0
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", line=lineno) from None
        pairs = []
        prev_idx = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"bad feature token {tok!r}", line=lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"bad feature token {tok!r}", line=lineno) from None
            if idx <= prev_idx:
                raise ParseError(
                    f"feature index {idx} not strictly increasing after {prev_idx}", line=lineno
                )
            prev_idx = idx
            pairs.append((idx, val))
        raw_labels.append(label)
        rows.append(pairs)
        if prev_idx > d:
            d = prev_idx
    if not rows:
        raise ParseError("no data lines found")

    x = np.zeros((len(rows), d))
    for r, pairs in enumerate(rows):
        for idx, val in pairs:
            x[r, idx - 1] = val

    classes = tuple(sorted(set(raw_labels)))
    index = {c: i for i, c in enumerate(classes)}
    labels = np.array([index[v] for v in raw_labels], dtype=np.int64)
    return Dataset(features=FeatureMatrix(x), labels=labels, classes=classes)


def _fmt(value: float) -> str:
    return repr(float(value))


def write_libsvm(features: FeatureMatrix, labels: np.ndarray, stream, classes=None) -> None:
    """Serialize a dense dataset; zero entries are omitted.

    ``classes`` maps 0-based label indices back to original label values;
    without it labels are written 1-based.
    """
    x = features.values
    for r in range(x.shape[0]):
        lab = int(labels[r])
        orig = classes[lab] if classes is not None else lab + 1
        parts = [_fmt(orig) if classes is not None else str(orig)]
        for c in np.flatnonzero(x[r] != 0.0):
            parts.append(f"{c + 1}:{_fmt(x[r, c])}")
        stream.write(" ".join(parts) + "\n")
