"""Label vocabulary: fine/coarse label maps and per-slice label presence.

Two granularities exist side by side. Fine labels are the 104 anatomical
structures annotated in the source dataset; coarse labels group them into
29 classes (every rib maps to "rib", every vertebra to "vertebrae", the
heart chambers and major vessels to "cardiovascular system", and so on).
A :class:`LabelMap` is the total function fine id -> coarse id plus the
human-readable names in both directions.

Ground truth for evaluation is label *presence* per slice, not mask
geometry: a :class:`SliceLabelTable` maps (volume_id, slice_index) to the
set of fine label ids visible on that slice.

File formats:

* label map: UTF-8 TSV with columns ``fine_id<TAB>fine_name<TAB>coarse_name``,
  ``#``-prefixed comment lines ignored;
* slice label table: UTF-8 CSV ``volume_id,slice_index,fine_label_ids``
  where the third column is ``;``-separated integers (may be empty).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import UnknownLabelError

_TS_RESOURCE = "totalsegmentator_labels.tsv"


@dataclass(frozen=True)
class LabelMap:
    """Total mapping from fine label ids to coarse label ids, with names.

    Coarse ids are assigned 0..n-1 in alphabetical order of coarse name,
    so they are stable for a given set of coarse names.
    """

    fine_names: tuple[str, ...]
    coarse_names: tuple[str, ...]
    fine_to_coarse: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.fine_names) != len(self.fine_to_coarse):
            raise ValueError("fine_names and fine_to_coarse lengths differ")
        for cid in self.fine_to_coarse:
            if not 0 <= cid < len(self.coarse_names):
                raise ValueError(f"coarse id {cid} out of range")

    @property
    def n_fine(self) -> int:
        return len(self.fine_names)

    @property
    def n_coarse(self) -> int:
        return len(self.coarse_names)

    def coarse_id(self, fine_id: int) -> int:
        if not 0 <= fine_id < self.n_fine:
            raise UnknownLabelError(f"fine label id {fine_id} outside [0, {self.n_fine - 1}]")
        return self.fine_to_coarse[fine_id]

    def fine_name(self, fine_id: int) -> str:
        if not 0 <= fine_id < self.n_fine:
            raise UnknownLabelError(f"fine label id {fine_id} outside [0, {self.n_fine - 1}]")
        return self.fine_names[fine_id]

    def coarse_name(self, coarse_id: int) -> str:
        if not 0 <= coarse_id < self.n_coarse:
            raise UnknownLabelError(f"coarse label id {coarse_id} outside [0, {self.n_coarse - 1}]")
        return self.coarse_names[coarse_id]

    def fine_id(self, name: str) -> int:
        """Look up a fine label by name; spaces and underscores are interchangeable."""
        wanted = name.strip().replace(" ", "_")
        for i, n in enumerate(self.fine_names):
            if n.replace(" ", "_") == wanted:
                return i
        raise UnknownLabelError(f"no fine label named {name!r}")

    def coarse_id_by_name(self, name: str) -> int:
        wanted = name.strip().replace(" ", "_")
        for i, n in enumerate(self.coarse_names):
            if n.replace(" ", "_") == wanted:
                return i
        raise UnknownLabelError(f"no coarse label named {name!r}")

    def label_name(self, label_id: int, coarse: bool) -> str:
        return self.coarse_name(label_id) if coarse else self.fine_name(label_id)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "LabelMap":
        """Build from (fine_name, coarse_name) pairs in fine-id order."""
        fine_names: list[str] = []
        coarse_of_fine: list[str] = []
        for fine, coarse in pairs:
            fine_names.append(fine)
            coarse_of_fine.append(coarse)
        coarse_names = tuple(sorted(set(coarse_of_fine)))
        index = {name: i for i, name in enumerate(coarse_names)}
        return cls(
            fine_names=tuple(fine_names),
            coarse_names=coarse_names,
            fine_to_coarse=tuple(index[c] for c in coarse_of_fine),
        )

    @classmethod
    def identity(cls, names: Iterable[str]) -> "LabelMap":
        """A map where every fine label is its own coarse class."""
        pairs = [(n, n) for n in names]
        return cls.from_pairs(pairs)


def coarsen(labels: Iterable[int], label_map: LabelMap) -> frozenset[int]:
    """Image of a fine-label set under the fine->coarse map.

    Raises:
        UnknownLabelError: for ids outside [0, n_fine).
    """
    return frozenset(label_map.coarse_id(l) for l in labels)


def load_label_map(path: str | Path) -> LabelMap:
    """Parse a three-column TSV label map file."""
    pairs: list[tuple[int, str, str]] = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated columns")
            pairs.append((int(parts[0]), parts[1], parts[2]))
    pairs.sort(key=lambda p: p[0])
    for expected, (fid, _, _) in enumerate(pairs):
        if fid != expected:
            raise ValueError(f"{path}: fine ids must be exactly 0..{len(pairs) - 1} (missing {expected})")
    return LabelMap.from_pairs([(fine, coarse) for _, fine, coarse in pairs])


def save_label_map(label_map: LabelMap, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("# fine_id\tfine_name\tcoarse_name\n")
        for fid, fine in enumerate(label_map.fine_names):
            f.write(f"{fid}\t{fine}\t{label_map.coarse_names[label_map.fine_to_coarse[fid]]}\n")


def totalsegmentator_map() -> LabelMap:
    """The built-in 104-structure map with its 29 coarse classes."""
    ref = resources.files(__package__).joinpath("data").joinpath(_TS_RESOURCE)
    pairs: list[tuple[str, str]] = []
    for raw in ref.read_text(encoding="utf-8").splitlines():
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        _, fine, coarse = raw.split("\t")
        pairs.append((fine, coarse))
    return LabelMap.from_pairs(pairs)


class SliceLabelTable:
    """Per-(volume, slice) sets of fine label ids.

    Slices with no annotated structure are legal and carry the empty set.
    Lookups for slices never registered also return the empty set; the
    table is immutable once built.
    """

    def __init__(self, mapping: Mapping[tuple[str, int], Iterable[int]] | None = None):
        self._by_volume: dict[str, dict[int, frozenset[int]]] = {}
        if mapping:
            for (volume_id, slice_index), labels in mapping.items():
                self._set(volume_id, slice_index, labels)

    def _set(self, volume_id: str, slice_index: int, labels: Iterable[int]) -> None:
        if slice_index < 0:
            raise ValueError(f"negative slice index for {volume_id!r}")
        self._by_volume.setdefault(volume_id, {})[slice_index] = frozenset(int(l) for l in labels)

    def labels(self, volume_id: str, slice_index: int) -> frozenset[int]:
        return self._by_volume.get(volume_id, {}).get(slice_index, frozenset())

    def labels_coarse(self, volume_id: str, slice_index: int, label_map: LabelMap) -> frozenset[int]:
        return coarsen(self.labels(volume_id, slice_index), label_map)

    def volume_slices(self, volume_id: str) -> dict[int, frozenset[int]]:
        """All registered slices of one volume, by slice index."""
        return dict(self._by_volume.get(volume_id, {}))

    def volume_labels(self, volume_id: str) -> frozenset[int]:
        """Union of fine labels over every slice of the volume."""
        out: set[int] = set()
        for labels in self._by_volume.get(volume_id, {}).values():
            out.update(labels)
        return frozenset(out)

    def volume_ids(self) -> list[str]:
        return list(self._by_volume.keys())

    def __contains__(self, volume_id: str) -> bool:
        return volume_id in self._by_volume

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_volume.values())

    def items(self) -> Iterator[tuple[str, int, frozenset[int]]]:
        for volume_id, slices in self._by_volume.items():
            for slice_index in sorted(slices):
                yield volume_id, slice_index, slices[slice_index]


def load_slice_labels(path: str | Path) -> SliceLabelTable:
    """Parse the ``volume_id,slice_index,fine_label_ids`` CSV."""
    table = SliceLabelTable()
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        for lineno, row in enumerate(reader, start=1):
            if not row or row[0].startswith("#"):
                continue
            if row[0] == "volume_id":  # header line
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            volume_id, slice_index, ids = row
            labels = [int(tok) for tok in ids.split(";") if tok != ""]
            table._set(volume_id, int(slice_index), labels)
    return table


def save_slice_labels(table: SliceLabelTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["volume_id", "slice_index", "fine_label_ids"])
        for volume_id, slice_index, labels in table.items():
            writer.writerow([volume_id, slice_index, ";".join(str(l) for l in sorted(labels))])
