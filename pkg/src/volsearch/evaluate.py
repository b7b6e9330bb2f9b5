"""Per-class recall under the four retrieval protocols, plus the two
localization-ratio measures and report serialization.

Recall here is the true-positive rate TP/(TP+FN): every query event either
finds its label (tp) or misses it (fn); there is no notion of false
positives because exactly one volume is retrieved per query.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .labels import LabelMap, SliceLabelTable
from .retrieval import RetrievedVolume
from .rerank import RerankResult

PROTOCOLS = ("slice", "volume", "region", "localized")
GRANULARITIES = ("coarse29", "fine104")


@dataclass
class ClassCounts:
    """tp/fn tallies per label id."""

    tp: dict[int, int] = field(default_factory=dict)
    fn: dict[int, int] = field(default_factory=dict)

    def add(self, label: int, hit: bool) -> None:
        bucket = self.tp if hit else self.fn
        bucket[label] = bucket.get(label, 0) + 1

    def events(self, label: int) -> int:
        return self.tp.get(label, 0) + self.fn.get(label, 0)

    def recall(self, label: int) -> float | None:
        n = self.events(label)
        if n == 0:
            return None
        return self.tp.get(label, 0) / n

    def labels(self) -> list[int]:
        return sorted(set(self.tp) | set(self.fn))

    def total_events(self) -> int:
        return sum(self.tp.values()) + sum(self.fn.values())


def slicewise_recall(
    matches: Iterable[tuple[frozenset[int], frozenset[int]]],
    counts: ClassCounts | None = None,
) -> ClassCounts:
    """Tally per-label hits over (query slice labels, found slice labels)
    pairs: each query label is tp when the found slice also carries it."""
    counts = counts if counts is not None else ClassCounts()
    for query_labels, found_labels in matches:
        for label in query_labels:
            counts.add(label, label in found_labels)
    return counts


def volume_recall(
    query_labels: frozenset[int],
    retrieved_labels: frozenset[int],
    counts: ClassCounts | None = None,
) -> ClassCounts:
    """Volume protocol: labels are unioned over all slices of each volume
    before comparison, so position inside the volume does not matter."""
    counts = counts if counts is not None else ClassCounts()
    for label in query_labels:
        counts.add(label, label in retrieved_labels)
    return counts


def region_recall(region: int, retrieved_volume_labels: frozenset[int]) -> bool:
    """Region protocol: tp iff the retrieved volume contains the region
    anywhere."""
    return region in retrieved_volume_labels


def _slice_labels(
    labels: SliceLabelTable,
    volume_id: str,
    slice_index: int,
    coarse: bool,
    label_map: LabelMap | None,
) -> frozenset[int]:
    if coarse:
        if label_map is None:
            raise ValueError("coarse evaluation needs a label map")
        return labels.labels_coarse(volume_id, slice_index, label_map)
    return labels.labels(volume_id, slice_index)


def localized_recall(
    region: int,
    volume_id: str,
    slice_indices: Sequence[int],
    labels: SliceLabelTable,
    coarse: bool = False,
    label_map: LabelMap | None = None,
) -> bool:
    """Localized protocol: tp iff at least one of the given slices of the
    retrieved volume actually contains the region. The volume containing
    the region elsewhere does not help."""
    return any(
        region in _slice_labels(labels, volume_id, sl, coarse, label_map) for sl in slice_indices
    )


def _containing_fraction(
    region: int,
    volume_id: str,
    slice_indices: Sequence[int],
    labels: SliceLabelTable,
    coarse: bool,
    label_map: LabelMap | None,
) -> float:
    if not slice_indices:
        raise ValueError("localization ratio needs at least one slice")
    containing = sum(
        1
        for sl in slice_indices
        if region in _slice_labels(labels, volume_id, sl, coarse, label_map)
    )
    return containing / len(slice_indices)


def localization_ratio_count(
    retrieved: RetrievedVolume,
    region: int,
    labels: SliceLabelTable,
    coarse: bool = False,
    label_map: LabelMap | None = None,
) -> float:
    """Fraction of distinct hit slices that contain the region."""
    return _containing_fraction(
        region, retrieved.volume_id, retrieved.hit_slice_indices, labels, coarse, label_map
    )


def localization_ratio_rerank(
    result: RerankResult,
    region: int,
    labels: SliceLabelTable,
    coarse: bool = False,
    label_map: LabelMap | None = None,
) -> float:
    """Fraction of the winner's top-L slices that contain the region.

    The denominator is the returned list length: a winner shorter than L
    cannot produce L candidates, so the clamped length is used.
    """
    indices = [sl for sl, _ in result.top_l_slices]
    return _containing_fraction(region, result.winner, indices, labels, coarse, label_map)


@dataclass
class EvalReport:
    """One protocol run: per-class tallies plus optional localization sums."""

    protocol: str
    granularity: str
    counts: ClassCounts
    lr_sum: dict[int, float] = field(default_factory=dict)
    lr_events: dict[int, int] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")

    def add_lr(self, label: int, ratio: float) -> None:
        self.lr_sum[label] = self.lr_sum.get(label, 0.0) + ratio
        self.lr_events[label] = self.lr_events.get(label, 0) + 1

    @property
    def has_lr(self) -> bool:
        return bool(self.lr_events)

    def lr(self, label: int) -> float | None:
        n = self.lr_events.get(label, 0)
        if n == 0:
            return None
        return self.lr_sum[label] / n


@dataclass(frozen=True)
class Summary:
    rows: tuple[tuple[int, float, float | None], ...]  # (label, recall, lr)
    average: float
    std: float
    lr_average: float | None
    lr_std: float | None
    absent: tuple[int, ...]  # labels with no query events


def summarize(report: EvalReport, all_labels: Iterable[int] | None = None) -> Summary:
    """Per-class table with average and population-std footers.

    Classes never queried are excluded from the averages and listed
    separately rather than scored 0.
    """
    counts = report.counts
    queried = counts.labels()
    rows = []
    for label in queried:
        recall = counts.recall(label)
        assert recall is not None
        rows.append((label, recall, report.lr(label)))
    if not rows:
        raise ValueError("no class has any query event")
    recalls = np.array([r for _, r, _ in rows], dtype=np.float64)
    lr_values = np.array([v for _, _, v in rows if v is not None], dtype=np.float64)
    absent: tuple[int, ...] = ()
    if all_labels is not None:
        absent = tuple(sorted(set(all_labels) - set(queried)))
    return Summary(
        rows=tuple(rows),
        average=float(recalls.mean()),
        std=float(recalls.std()),
        lr_average=float(lr_values.mean()) if lr_values.size else None,
        lr_std=float(lr_values.std()) if lr_values.size else None,
        absent=absent,
    )


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.6f}"


def write_report_csv(
    report: EvalReport,
    path: str | Path,
    name_of: Callable[[int], str],
    all_labels: Iterable[int] | None = None,
) -> None:
    """Report CSV: one row per class, `average` and `std` footer rows.

    Absent classes (no query events) appear with `n/a` cells and do not
    enter the footers.
    """
    summary = summarize(report, all_labels)
    with_lr = report.has_lr
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        header = ["class", "recall"] + (["localization_ratio"] if with_lr else [])
        writer.writerow(header)
        for label, recall, lr in summary.rows:
            row = [name_of(label), _fmt(recall)] + ([_fmt(lr)] if with_lr else [])
            writer.writerow(row)
        for label in summary.absent:
            writer.writerow([name_of(label), "n/a"] + (["n/a"] if with_lr else []))
        writer.writerow(["average", _fmt(summary.average)] + ([_fmt(summary.lr_average)] if with_lr else []))
        writer.writerow(["std", _fmt(summary.std)] + ([_fmt(summary.lr_std)] if with_lr else []))


def format_report(
    report: EvalReport,
    name_of: Callable[[int], str],
    all_labels: Iterable[int] | None = None,
) -> str:
    """Aligned text table of the same content as the CSV."""
    summary = summarize(report, all_labels)
    with_lr = report.has_lr
    rows: list[tuple[str, str, str]] = []
    for label, recall, lr in summary.rows:
        rows.append((name_of(label), _fmt(recall), _fmt(lr) if with_lr else ""))
    for label in summary.absent:
        rows.append((name_of(label), "n/a", "n/a" if with_lr else ""))
    rows.append(("average", _fmt(summary.average), _fmt(summary.lr_average) if with_lr else ""))
    rows.append(("std", _fmt(summary.std), _fmt(summary.lr_std) if with_lr else ""))
    name_w = max(len("class"), max(len(r[0]) for r in rows))
    rec_w = max(len("recall"), max(len(r[1]) for r in rows))
    lines = []
    if with_lr:
        lines.append(f"{'class':<{name_w}}  {'recall':>{rec_w}}  localization_ratio")
        for name, rec, lr in rows:
            lines.append(f"{name:<{name_w}}  {rec:>{rec_w}}  {lr}")
    else:
        lines.append(f"{'class':<{name_w}}  {'recall':>{rec_w}}")
        for name, rec, _ in rows:
            lines.append(f"{name:<{name_w}}  {rec:>{rec_w}}")
    return "\n".join(lines)
