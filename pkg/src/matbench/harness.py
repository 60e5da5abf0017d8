"""Batch runner: split, featurize, train, rank, evaluate, report.

A test is one (architecture, dataset, category) combination. Features come
either from the layer engine's tap or from an ingested FVEC file; the split
protocol labels them, a linear SVM ranks them, and the run yields average
precision reports for the train and test phases plus the four plot-ready
CSV files. Batches aggregate wall times into the per-architecture,
per-dataset timing table.
"""

from __future__ import annotations

import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

import numpy as np

from . import evaluation, features, network, protocol, svm
from .errors import (
    CorruptHeader,
    EmptyInput,
    MatbenchError,
    StageError,
    UnsupportedFormat,
)

_SAFE_NAME = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass(frozen=True)
class TestSpec:
    """Parameters of a single benchmark test."""

    __test__ = False  # not a pytest class, despite the name

    dataset: str
    category: str
    test_name: str
    arch: str | None = None
    features_in: str | None = None
    seed: int = 0
    patch: tuple[int, int, float] | None = None
    normalize: bool = True
    svm_c: float = 10.0

    def __post_init__(self):
        if (self.arch is None) == (self.features_in is None):
            raise ValueError("exactly one feature source: --arch or --features-in")
        if not _SAFE_NAME.match(self.test_name):
            raise ValueError(f"test name {self.test_name!r} is not filesystem-safe")

    @property
    def arch_label(self) -> str:
        if self.arch is not None:
            return self.arch
        return f"fvec:{Path(self.features_in).stem}"


@dataclass(frozen=True)
class RunReport:
    test_name: str
    train_ap: evaluation.APReport
    test_ap: evaluation.APReport
    train_top36: tuple[evaluation.ScoredImage, ...]
    test_top36: tuple[evaluation.ScoredImage, ...]
    wall_time: float  # minutes


@dataclass(frozen=True)
class CategoryResult:
    """One per-category evaluation value, the unit reports aggregate over."""

    arch: str
    dataset: str
    category: str
    ap: float


@dataclass
class TimingTable:
    """(arch, dataset, minutes) rows with exact per-axis sums."""

    rows: list[tuple[str, str, float]] = field(default_factory=list)

    def archs(self) -> list[str]:
        return list(dict.fromkeys(arch for arch, _, _ in self.rows))

    def datasets(self) -> list[str]:
        return list(dict.fromkeys(ds for _, ds, _ in self.rows))

    def cell(self, arch: str, dataset: str) -> float | None:
        total = None
        for row_arch, row_ds, minutes in self.rows:
            if row_arch == arch and row_ds == dataset:
                total = (total or 0.0) + minutes
        return total

    def dataset_totals(self) -> dict[str, float]:
        totals: dict[str, float] = {}
        for _, ds, minutes in self.rows:
            totals[ds] = totals.get(ds, 0.0) + minutes
        return totals

    def arch_totals(self) -> dict[str, float]:
        totals: dict[str, float] = {}
        for arch, _, minutes in self.rows:
            totals[arch] = totals.get(arch, 0.0) + minutes
        return totals

    def grand_total(self) -> float:
        return sum(minutes for _, _, minutes in self.rows)

    def to_csv(self) -> str:
        datasets = self.datasets()
        lines = ["arch," + ",".join(datasets) + ",total"]
        for arch in self.archs():
            cells = []
            for ds in datasets:
                value = self.cell(arch, ds)
                cells.append("" if value is None else features.fmt_float(value))
            lines.append(
                f"{arch}," + ",".join(cells) + f",{features.fmt_float(self.arch_totals()[arch])}"
            )
        ds_totals = self.dataset_totals()
        lines.append(
            "TOTAL,"
            + ",".join(features.fmt_float(ds_totals[ds]) for ds in datasets)
            + f",{features.fmt_float(self.grand_total())}"
        )
        return "\n".join(lines) + "\n"


@dataclass
class BatchEntry:
    """Outcome of one plan row: a report or the stage-tagged failure."""

    spec: TestSpec
    report: RunReport | None = None
    error: StageError | None = None
    dataset_name: str | None = None

    @property
    def ok(self) -> bool:
        return self.report is not None


# ---------------------------------------------------------------------------
# image loading

def load_toy_image(path: str | Path) -> np.ndarray:
    """Read a binary PPM (P6) or PGM (P5) with maxval 255 into [0, 1] floats."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormat(f"{path}: not a binary PGM/PPM file")
    channels = 3 if magic == b"P6" else 1

    # header tokens: width, height, maxval; '#' comments run to end of line
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        if pos >= len(data):
            raise CorruptHeader(f"{path}: truncated header")
        ch = data[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise CorruptHeader(f"{path}: unexpected byte {ch!r} in header")
    width, height, maxval = fields
    if maxval != 255:
        raise CorruptHeader(f"{path}: maxval {maxval}, only 255 supported")
    if width < 1 or height < 1:
        raise CorruptHeader(f"{path}: non-positive dimensions {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * channels
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise CorruptHeader(f"{path}: raster holds {len(raster)} bytes, expected {expected}")
    pixels = np.frombuffer(raster, dtype=np.uint8).astype(np.float64) / 255.0
    return pixels.reshape(height, width, channels)


# ---------------------------------------------------------------------------
# single test execution

def _stage(stage_name: str):
    class _StageContext:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, (MatbenchError, OSError, ValueError)):
                raise StageError(stage_name, exc) from exc
            return False

    return _StageContext()


def _gather_features(
    spec: TestSpec,
    plan: protocol.SplitPlan,
    manifest_dir: Path,
) -> dict[str, np.ndarray]:
    """Feature vector for every image id referenced by the split plan."""
    needed = [
        image_id
        for part in (plan.pos_train, plan.neg_train, plan.pos_test, plan.neg_test)
        for _, image_id in part
    ]
    vectors: dict[str, np.ndarray] = {}
    if spec.features_in is not None:
        with open(spec.features_in, "r", encoding="utf-8") as fh:
            records = features.read_features(fh)
        table: dict[str, np.ndarray] = {}
        for rec in records:
            table.setdefault(rec.image_id, rec.values)
        for image_id in needed:
            if image_id not in table:
                raise MatbenchError(
                    f"no feature for image {image_id!r} in {spec.features_in}"
                )
            vectors[image_id] = table[image_id]
        return vectors

    net = network.load_network(spec.arch, seed=spec.seed)
    target = (net.input_shape[0], net.input_shape[1])
    for image_id in needed:
        if image_id in vectors:
            continue
        image = load_toy_image(manifest_dir / image_id)
        if spec.patch is not None:
            cx, cy, scale = spec.patch
            image = network.extract_patch(image, (cx, cy), scale, target)
        vectors[image_id] = network.forward_with_tap(net, image, image_id=image_id).values
    return vectors


def _score_phase(
    model: svm.LinearModel,
    vectors: dict[str, np.ndarray],
    positives: Sequence[tuple[str, str]],
    negatives: Sequence[tuple[str, str]],
) -> evaluation.APReport:
    items = [
        evaluation.ScoredImage(image_id=i, score=svm.score(model, vectors[i]), relevant=True)
        for _, i in positives
    ]
    items.extend(
        evaluation.ScoredImage(image_id=i, score=svm.score(model, vectors[i]), relevant=False)
        for _, i in negatives
    )
    return evaluation.average_precision(evaluation.rank(items))


def run_test(spec: TestSpec) -> RunReport:
    """Run the full pipeline for one test; raises StageError on failure."""
    started = time.perf_counter()

    with _stage("manifest"):
        with open(spec.dataset, "r", encoding="utf-8") as fh:
            manifest = protocol.load_manifest(fh)
    with _stage("split"):
        plan = protocol.build_split(manifest, spec.category)
    with _stage("features"):
        vectors = _gather_features(spec, plan, Path(spec.dataset).parent)
    if spec.normalize:
        with _stage("normalize"):
            vectors = {k: features.l2_normalize(v) for k, v in vectors.items()}
    with _stage("train"):
        train_data = [(vectors[i], 1) for _, i in plan.pos_train]
        train_data += [(vectors[i], -1) for _, i in plan.neg_train]
        cfg = svm.TrainConfig(c=spec.svm_c, seed=spec.seed)
        model = svm.train_linear_svm(train_data, cfg)
    with _stage("evaluate"):
        train_report = _score_phase(model, vectors, plan.pos_train, plan.neg_train)
        test_report = _score_phase(model, vectors, plan.pos_test, plan.neg_test)

    minutes = (time.perf_counter() - started) / 60.0
    return RunReport(
        test_name=spec.test_name,
        train_ap=train_report,
        test_ap=test_report,
        train_top36=tuple(evaluation.top_n(train_report.ranked)),
        test_top36=tuple(evaluation.top_n(test_report.ranked)),
        wall_time=minutes,
    )


def _dataset_name(spec: TestSpec) -> str | None:
    try:
        with open(spec.dataset, "r", encoding="utf-8") as fh:
            return protocol.load_manifest(fh).dataset_name
    except (MatbenchError, OSError):
        return None


def _run_entry(spec: TestSpec) -> BatchEntry:
    entry = BatchEntry(spec=spec, dataset_name=_dataset_name(spec))
    try:
        entry.report = run_test(spec)
    except StageError as err:
        entry.error = err
    return entry


def run_batch(
    plan: Sequence[TestSpec], parallelism: int = 1
) -> tuple[list[BatchEntry], TimingTable]:
    """Run every test; entry order always equals plan order.

    Individual failures are recorded on their entries and the batch keeps
    going. Only successful runs contribute timing rows.
    """
    if not plan:
        raise EmptyInput("batch plan is empty")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if parallelism == 1:
        entries = [_run_entry(spec) for spec in plan]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            entries = list(pool.map(_run_entry, plan))
    timing = TimingTable()
    for entry in entries:
        if entry.ok and entry.dataset_name is not None:
            timing.rows.append(
                (entry.spec.arch_label, entry.dataset_name, entry.report.wall_time)
            )
    return entries, timing


# ---------------------------------------------------------------------------
# report emission

def percent(x: float) -> str:
    """Fraction in [0, 1] rendered as a percentage, 2 decimals, half-up."""
    return str(
        Decimal(str(float(x) * 100.0)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    )


def _grouped(results: Sequence[CategoryResult]):
    """(arch, dataset) -> ordered {category: ap}, insertion orders preserved."""
    table: dict[tuple[str, str], dict[str, float]] = {}
    for res in results:
        table.setdefault((res.arch, res.dataset), {})[res.category] = res.ap
    return table


def emit_report(
    results: Sequence[CategoryResult],
    layout: str,
) -> str:
    """Aggregate per-category results into one of the three table layouts."""
    if not results:
        raise EmptyInput("no results to report")
    table = _grouped(results)
    archs = list(dict.fromkeys(res.arch for res in results))
    datasets = list(dict.fromkeys(res.dataset for res in results))

    if layout == "per-category-table":
        blocks = []
        for ds in datasets:
            categories = list(
                dict.fromkeys(
                    res.category for res in results if res.dataset == ds
                )
            )
            lines = ["arch," + ",".join(categories)]
            for arch in archs:
                cells = table.get((arch, ds))
                if cells is None:
                    continue
                lines.append(
                    f"{arch},"
                    + ",".join(
                        percent(cells[cat]) if cat in cells else "" for cat in categories
                    )
                )
            header = [] if len(datasets) == 1 else [f"dataset,{ds}"]
            blocks.append("\n".join(header + lines))
        return "\n\n".join(blocks) + "\n"

    if layout == "map-summary":
        lines = ["arch," + ",".join(datasets)]
        for arch in archs:
            cells = []
            for ds in datasets:
                group = table.get((arch, ds))
                if group is None:
                    cells.append("")
                else:
                    cells.append(percent(evaluation.mean_ap(list(group.items()))))
            lines.append(f"{arch}," + ",".join(cells))
        return "\n".join(lines) + "\n"

    if layout == "common-ground":
        lines = ["arch," + ",".join(datasets)]
        for arch in archs:
            cells = []
            for ds in datasets:
                group = table.get((arch, ds))
                if group is None:
                    cells.append("")
                else:
                    six = evaluation.common_ground_filter(list(group.items()))
                    cells.append(percent(evaluation.mean_ap(six)))
            lines.append(f"{arch}," + ",".join(cells))
        return "\n".join(lines) + "\n"

    raise ValueError(f"unknown layout {layout!r}")


def _top36_csv(items: Sequence[evaluation.ScoredImage]) -> str:
    lines = ["rank,image_id,score,relevant"]
    for rank_pos, item in enumerate(items, start=1):
        flag = "1" if item.relevant else "0"
        lines.append(f"{rank_pos},{item.image_id},{features.fmt_float(item.score)},{flag}")
    return "\n".join(lines) + "\n"


def emit_plot_data(report: RunReport, out_dir: str | Path) -> list[Path]:
    """Write the four plot-ready files for one run; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payloads = {
        "train_top36.csv": _top36_csv(report.train_top36),
        "train_pr.csv": evaluation.pr_curve_csv(report.train_ap.curve),
        "test_top36.csv": _top36_csv(report.test_top36),
        "test_pr.csv": evaluation.pr_curve_csv(report.test_ap.curve),
    }
    written = []
    for filename, text in payloads.items():
        path = out / filename
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written


RESULT_HEADER = "test_name,arch,dataset,category,train_ap,test_ap,wall_time_minutes"


def write_result_csv(entry: BatchEntry, path: str | Path) -> None:
    report = entry.report
    row = ",".join(
        [
            report.test_name,
            entry.spec.arch_label,
            entry.dataset_name or "",
            entry.spec.category,
            features.fmt_float(report.train_ap.ap),
            features.fmt_float(report.test_ap.ap),
            features.fmt_float(report.wall_time),
        ]
    )
    Path(path).write_text(RESULT_HEADER + "\n" + row + "\n", encoding="utf-8")


def read_result_csv(path: str | Path) -> tuple[CategoryResult, tuple[str, str, float]]:
    """Returns the test-phase CategoryResult and the (arch, dataset, minutes) row."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 2 or lines[0] != RESULT_HEADER:
        raise ValueError(f"{path}: not a result csv")
    cells = lines[1].split(",")
    if len(cells) != 7:
        raise ValueError(f"{path}: malformed result row")
    _, arch, dataset, category, _, test_ap, minutes = cells
    return (
        CategoryResult(arch=arch, dataset=dataset, category=category, ap=float(test_ap)),
        (arch, dataset, float(minutes)),
    )
