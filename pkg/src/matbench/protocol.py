"""Positive/negative train/test split plans built from a dataset manifest.

Every split is a pure function of the manifest and the negative fraction:
the first half of a category (in manifest order) trains, the second half
tests, negatives for training come from the leading slice of each sibling
category's train half, and negatives for testing come from the constant
external pool truncated to the positive test size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable

from .errors import (
    DuplicateId,
    EmptyCategory,
    EmptyNegativeTrain,
    NegativePoolTooSmall,
    ParseError,
    UnknownCategory,
)

# source tag recorded for images drawn from the negative test pool
NEG_POOL_SOURCE = "negpool"


@dataclass(frozen=True)
class CategoryEntry:
    name: str
    image_ids: tuple[str, ...]


@dataclass(frozen=True)
class DatasetManifest:
    dataset_name: str
    categories: tuple[CategoryEntry, ...]
    negative_pool: tuple[str, ...]

    def category(self, name: str) -> CategoryEntry:
        for entry in self.categories:
            if entry.name == name:
                return entry
        raise UnknownCategory(f"category {name!r} not in manifest {self.dataset_name!r}")

    def category_names(self) -> tuple[str, ...]:
        return tuple(entry.name for entry in self.categories)


@dataclass(frozen=True)
class SplitPlan:
    """The four (source-category, image-id) lists for one category test."""

    category: str
    pos_train: tuple[tuple[str, str], ...]
    pos_test: tuple[tuple[str, str], ...]
    neg_train: tuple[tuple[str, str], ...]
    neg_test: tuple[tuple[str, str], ...]


def _train_half(ids: tuple[str, ...]) -> tuple[str, ...]:
    return ids[: (len(ids) + 1) // 2]


def build_split(
    manifest: DatasetManifest, category: str, negative_fraction: float = 0.1
) -> SplitPlan:
    """Split `category` into the four positive/negative train/test sets."""
    if not 0.0 < negative_fraction <= 1.0:
        raise ValueError("negative_fraction must be in (0, 1]")
    entry = manifest.category(category)
    if not entry.image_ids:
        raise EmptyCategory(f"category {category!r} has no images")

    others = [c for c in manifest.categories if c.name != category]
    if not others:
        raise EmptyNegativeTrain("no remaining categories to draw negatives from")
    for other in others:
        if not other.image_ids:
            raise EmptyCategory(f"category {other.name!r} has no images")

    n = len(entry.image_ids)
    half = (n + 1) // 2
    pos_train = tuple((category, i) for i in entry.image_ids[:half])
    pos_test = tuple((category, i) for i in entry.image_ids[half:])

    # exact-decimal fraction arithmetic so ceil() never trips on binary
    # float artifacts such as 0.3 * 10 -> 3.0000000000000004
    frac = Fraction(str(float(negative_fraction)))
    neg_train: list[tuple[str, str]] = []
    for other in others:
        train_ids = _train_half(other.image_ids)
        take = math.ceil(frac * len(train_ids))
        neg_train.extend((other.name, i) for i in train_ids[:take])

    need = len(pos_test)
    if len(manifest.negative_pool) < need or not manifest.negative_pool:
        raise NegativePoolTooSmall(needed=need, available=len(manifest.negative_pool))
    neg_test = tuple((NEG_POOL_SOURCE, i) for i in manifest.negative_pool[:need])

    return SplitPlan(
        category=category,
        pos_train=pos_train,
        pos_test=pos_test,
        neg_train=tuple(neg_train),
        neg_test=neg_test,
    )


def _lines(stream: IO[str] | str | Iterable[str]) -> Iterable[str]:
    if isinstance(stream, str):
        return stream.splitlines()
    return stream


def load_manifest(stream: IO[str] | str | Iterable[str]) -> DatasetManifest:
    """Parse the line-oriented manifest grammar.

    Header `MANIFEST <name>`, then `CAT <name>` blocks of `IMG <id>` lines,
    then one `NEGPOOL` section of `IMG <id>` lines. Blank lines are skipped.
    """
    dataset_name: str | None = None
    categories: list[tuple[str, list[str]]] = []
    seen_categories: set[str] = set()
    current_ids: set[str] = set()
    pool: list[str] = []
    pool_ids: set[str] = set()
    in_pool = False

    for lineno, raw in enumerate(_lines(stream), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        keyword = tokens[0]
        if dataset_name is None:
            if keyword != "MANIFEST" or len(tokens) != 2:
                raise ParseError("expected 'MANIFEST <dataset_name>' header", lineno)
            dataset_name = tokens[1]
            continue
        if keyword == "CAT":
            if in_pool:
                raise ParseError("CAT after NEGPOOL section", lineno)
            if len(tokens) != 2:
                raise ParseError("expected 'CAT <category_name>'", lineno)
            if tokens[1] in seen_categories:
                raise ParseError(f"duplicate category {tokens[1]!r}", lineno)
            seen_categories.add(tokens[1])
            categories.append((tokens[1], []))
            current_ids = set()
        elif keyword == "NEGPOOL":
            if in_pool:
                raise ParseError("second NEGPOOL section", lineno)
            if len(tokens) != 1:
                raise ParseError("NEGPOOL takes no arguments", lineno)
            in_pool = True
        elif keyword == "IMG":
            if len(tokens) != 2:
                raise ParseError("expected 'IMG <image_id>'", lineno)
            image_id = tokens[1]
            if in_pool:
                if image_id in pool_ids:
                    raise DuplicateId(
                        f"line {lineno}: image {image_id!r} repeated in negative pool"
                    )
                pool_ids.add(image_id)
                pool.append(image_id)
            else:
                if not categories:
                    raise ParseError("IMG before any CAT", lineno)
                name, ids = categories[-1]
                if image_id in current_ids:
                    raise DuplicateId(
                        f"line {lineno}: image {image_id!r} repeated in category {name!r}"
                    )
                current_ids.add(image_id)
                ids.append(image_id)
        else:
            raise ParseError(f"unknown keyword {keyword!r}", lineno)

    if dataset_name is None:
        raise ParseError("empty manifest: missing MANIFEST header", 1)
    if not in_pool:
        raise ParseError("missing NEGPOOL section", None)

    return DatasetManifest(
        dataset_name=dataset_name,
        categories=tuple(
            CategoryEntry(name=n, image_ids=tuple(ids)) for n, ids in categories
        ),
        negative_pool=tuple(pool),
    )
