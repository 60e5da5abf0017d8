"""Portable text serialization of feature vectors, plus L2 normalization.

The FVEC format is line-oriented UTF-8: a header `FVEC <D> <count>`, then
one record per line as `<image_id> <label> <v1> ... <vD>`. Floats are
printed with their shortest round-trip decimal representation, so
read(write(records)) reproduces every value exactly on any platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from .errors import DimensionMismatch, MixedDimensions, ParseError
from .network import FeatureVector

NORM_EPSILON = 1e-12

_LABEL_OUT = {1: "+1", -1: "-1", 0: "0"}
_LABEL_IN = {"+1": 1, "1": 1, "-1": -1, "0": 0}


def fmt_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same float64."""
    return repr(float(x))


@dataclass(eq=False)
class FeatureRecord:
    """One image's descriptor with its +1 / -1 / 0 (unlabeled) tag."""

    image_id: str
    label: int
    vector: FeatureVector

    def __post_init__(self):
        if self.label not in _LABEL_OUT:
            raise ValueError(f"label must be +1, -1 or 0, got {self.label!r}")
        if not isinstance(self.vector, FeatureVector):
            self.vector = FeatureVector(values=self.vector, source_image=self.image_id)

    @property
    def values(self) -> np.ndarray:
        return self.vector.values

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureRecord):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.label == other.label
            and np.array_equal(self.values, other.values)
        )


def write_features(records: Iterable[FeatureRecord], stream: IO[str]) -> int:
    """Emit records in FVEC form; returns the number of bytes written."""
    records = list(records)
    if records:
        dim = len(records[0].values)
        if dim < 1:
            raise ValueError("feature dimension must be >= 1")
    else:
        dim = 0
    lines = [f"FVEC {dim} {len(records)}"]
    for rec in records:
        if len(rec.values) != dim:
            raise MixedDimensions(
                f"record {rec.image_id!r} has dimension {len(rec.values)}, expected {dim}"
            )
        if not np.all(np.isfinite(rec.values)):
            raise ValueError(f"record {rec.image_id!r} contains non-finite values")
        parts = [rec.image_id, _LABEL_OUT[rec.label]]
        parts.extend(fmt_float(v) for v in rec.values)
        lines.append(" ".join(parts))
    text = "\n".join(lines) + "\n"
    stream.write(text)
    return len(text.encode("utf-8"))


def read_features(stream: IO[str] | str | Iterable[str]) -> list[FeatureRecord]:
    """Parse an FVEC stream; the exact inverse of write_features."""
    lines = stream.splitlines() if isinstance(stream, str) else list(stream)
    it = iter(enumerate(lines, start=1))
    header = None
    for lineno, raw in it:
        if raw.split():
            header = (lineno, raw.split())
            break
    if header is None:
        raise ParseError("empty feature file", 1)
    lineno, tokens = header
    if len(tokens) != 3 or tokens[0] != "FVEC":
        raise ParseError("expected 'FVEC <D> <count>' header", lineno)
    try:
        dim, count = int(tokens[1]), int(tokens[2])
    except ValueError as err:
        raise ParseError("non-integer FVEC header fields", lineno) from err
    if dim < 0 or count < 0:
        raise ParseError("negative FVEC header fields", lineno)

    records: list[FeatureRecord] = []
    for lineno, raw in it:
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) < 2:
            raise ParseError("record needs '<image_id> <label> ...'", lineno)
        image_id = tokens[0]
        if tokens[1] not in _LABEL_IN:
            raise ParseError(f"bad label token {tokens[1]!r}", lineno)
        label = _LABEL_IN[tokens[1]]
        raw_values = tokens[2:]
        if len(raw_values) != dim:
            raise DimensionMismatch(
                f"line {lineno}: {len(raw_values)} values, header says {dim}"
            )
        try:
            values = np.array([float(v) for v in raw_values], dtype=np.float64)
        except ValueError as err:
            raise ParseError(f"bad float in record {image_id!r}", lineno) from err
        if raw_values and not np.all(np.isfinite(values)):
            raise ParseError(f"non-finite value in record {image_id!r}", lineno)
        records.append(FeatureRecord(image_id=image_id, label=label, vector=values))
    if len(records) != count:
        raise ParseError(f"header promised {count} records, found {len(records)}", None)
    return records


def load_layer_weights(stream: IO[str] | str | Iterable[str]) -> dict[int, np.ndarray]:
    """Optional weight-override file: FVEC records keyed by layer index.

    Each record's image_id is the decimal layer index; its vector is that
    layer's flat parameter sequence.
    """
    overrides: dict[int, np.ndarray] = {}
    for rec in read_features(stream):
        try:
            index = int(rec.image_id)
        except ValueError as err:
            raise ParseError(f"layer index expected, got {rec.image_id!r}", None) from err
        overrides[index] = rec.values
    return overrides


def l2_normalize(v):
    """Scale to unit L2 norm; vectors with norm <= 1e-12 pass through unchanged."""
    if isinstance(v, FeatureVector):
        scaled = l2_normalize(v.values)
        return FeatureVector(values=scaled, source_image=v.source_image)
    arr = np.asarray(v, dtype=np.float64)
    norm = math.sqrt(float(arr @ arr))
    if norm > NORM_EPSILON:
        return arr / norm
    return arr
