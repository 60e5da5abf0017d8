"""Shared fixture builders for the test suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from matbench.features import FeatureRecord, write_features
from matbench.rng import SplitMix64


def manifest_text(name: str, categories: dict[str, list[str]], pool: list[str]) -> str:
    lines = [f"MANIFEST {name}"]
    for cat, ids in categories.items():
        lines.append(f"CAT {cat}")
        lines.extend(f"IMG {i}" for i in ids)
    lines.append("NEGPOOL")
    lines.extend(f"IMG {i}" for i in pool)
    return "\n".join(lines) + "\n"


def write_ppm(path: Path, height: int, width: int, seed: int, channels: int = 3) -> None:
    """Deterministic binary PPM (P6) or PGM (P5) fixture."""
    rng = SplitMix64(seed)
    count = height * width * channels
    raster = bytes(rng.below(256) for _ in range(count))
    magic = b"P6" if channels == 3 else b"P5"
    header = magic + f"\n{width} {height}\n255\n".encode("ascii")
    path.write_bytes(header + raster)


def separable_records(
    pos_ids: list[str], neg_ids: list[str], flat_id: str | None = None
) -> list[FeatureRecord]:
    """2-d features: positives tilt up near (1, 0.45), negatives near (-1, 0.2).

    `flat_id` pins one positive to exactly (1, 0); flipping that vector's
    sign then scores below every negative for any separator with a
    non-negative second weight, which the tilted clusters force.
    """
    rng = SplitMix64(99)
    records = []
    for image_id in pos_ids:
        if image_id == flat_id:
            vec = np.array([1.0, 0.0])
        else:
            vec = np.array([1.0 + 0.05 * rng.next_float(), 0.4 + 0.1 * rng.next_float()])
        records.append(FeatureRecord(image_id, 0, vec))
    for image_id in neg_ids:
        vec = np.array([-1.0 - 0.05 * rng.next_float(), 0.15 + 0.1 * rng.next_float()])
        records.append(FeatureRecord(image_id, 0, vec))
    return records


@pytest.fixture
def separable_run(tmp_path):
    """Manifest plus ingested separable features for end-to-end runs.

    Two categories of six images each and a four-image pool; "fabric" is
    the positive class, everything else sits near (-1, 0).
    """
    fabric = [f"fab{i}" for i in range(6)]
    stone = [f"sto{i}" for i in range(6)]
    pool = [f"ani{i}" for i in range(4)]
    manifest_path = tmp_path / "toy.manifest"
    manifest_path.write_text(
        manifest_text("toy", {"fabric": fabric, "stone": stone}, pool),
        encoding="utf-8",
    )
    features_path = tmp_path / "toy.fvec"
    with open(features_path, "w", encoding="utf-8") as fh:
        write_features(separable_records(fabric, stone + pool), fh)
    return manifest_path, features_path
