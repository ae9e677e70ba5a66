"""Turn on-disk dataset layouts into manifests; frame sampling for videos."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Optional, Sequence

from .core import DatasetManifest, DomainTag, SampleRecord, SplitTag, make_sample
from .errors import DanglingMask, DomainMismatch, LayoutMismatch, ManifestError
from .images import binarize_mask, is_image_file, read_image

PAIRED_DIRS = "paired_dirs"
FLAT_WITH_INDEX = "flat_with_index"


@dataclass(frozen=True)
class LayoutSpec:
    """How one split of a dataset is laid out below its root.

    ``paired_dirs``: authentic images under ``real_dir``, fakes under
    ``fake_dir``; masks (optional) are found in ``mask_dir`` as
    ``<stem><mask_suffix>.<ext>``.
    ``flat_with_index``: a CSV ``index_file`` with columns image,label[,mask].
    """

    kind: str
    real_dir: Optional[str] = None
    fake_dir: Optional[str] = None
    index_file: Optional[str] = None
    mask_dir: Optional[str] = None
    mask_suffix: str = "_mask"

    def __post_init__(self):
        if self.kind == PAIRED_DIRS:
            if self.real_dir is None and self.fake_dir is None:
                raise LayoutMismatch("paired_dirs layout needs real_dir and/or fake_dir")
            if self.index_file is not None:
                raise LayoutMismatch("paired_dirs layout does not take index_file")
        elif self.kind == FLAT_WITH_INDEX:
            if self.index_file is None:
                raise LayoutMismatch("flat_with_index layout needs index_file")
            if self.real_dir is not None or self.fake_dir is not None or self.mask_dir is not None:
                raise LayoutMismatch("flat_with_index layout takes only index_file")
        else:
            raise LayoutMismatch(f"unknown layout kind {self.kind!r}")

    def with_split(self, split: str) -> "LayoutSpec":
        """Substitute ``{split}`` in every path field."""
        sub = lambda v: None if v is None else v.replace("{split}", split)
        return LayoutSpec(self.kind, sub(self.real_dir), sub(self.fake_dir), sub(self.index_file),
                          sub(self.mask_dir), self.mask_suffix)


def _scan(root: Path, rel_dir: str) -> list[str]:
    base = root / rel_dir
    if not base.is_dir():
        raise LayoutMismatch(f"declared directory {base} does not exist")
    found = []
    for dirpath, _dirnames, filenames in os.walk(base):
        for fn in filenames:
            if is_image_file(fn):
                found.append(Path(dirpath, fn).relative_to(root).as_posix())
    return found


def _sample_id(rel: str) -> str:
    p = PurePosixPath(rel)
    return str(p.with_suffix(""))


def _finish(records: list[SampleRecord], name: str, domain: DomainTag) -> DatasetManifest:
    records.sort(key=lambda r: r.image_ref)
    seen: dict[str, str] = {}
    for r in records:
        if r.id in seen:
            raise LayoutMismatch(f"images {seen[r.id]!r} and {r.image_ref!r} map to the same id {r.id!r}")
        seen[r.id] = r.image_ref
    return DatasetManifest.from_records(name, domain, records)


def ingest_dataset(root, layout: LayoutSpec, name: str, domain: DomainTag, split: SplitTag) -> DatasetManifest:
    """Index one split of a dataset. Records are ordered by relative image path."""
    root = Path(root)
    if not root.is_dir():
        raise LayoutMismatch(f"dataset root {root} does not exist")
    domain, split = DomainTag(domain), SplitTag(split)
    records = _ingest_records(root, layout, name, domain, split)
    return _finish(records, name, domain)


def _ingest_records(root: Path, layout: LayoutSpec, name: str, domain: DomainTag, split: SplitTag) -> list[SampleRecord]:
    if layout.kind == PAIRED_DIRS:
        for rel_dir in (layout.real_dir, layout.fake_dir):
            if rel_dir is not None and not (root / rel_dir).is_dir():
                raise LayoutMismatch(f"declared directory {root / rel_dir} does not exist")
        masks: dict[str, str] = {}
        if layout.mask_dir is not None:
            for rel in _scan(root, layout.mask_dir):
                stem = PurePosixPath(rel).stem
                if stem.endswith(layout.mask_suffix):
                    key = stem[: len(stem) - len(layout.mask_suffix)] if layout.mask_suffix else stem
                    # several extensions for one stem: lexicographically first wins
                    if key not in masks or rel < masks[key]:
                        masks[key] = rel
        mask_root = None if layout.mask_dir is None else PurePosixPath(layout.mask_dir)
        records = []
        for rel_dir, label in ((layout.real_dir, 0), (layout.fake_dir, 1)):
            if rel_dir is None:
                continue
            for rel in _scan(root, rel_dir):
                if mask_root is not None and PurePosixPath(rel).is_relative_to(mask_root):
                    continue
                mask = masks.get(PurePosixPath(rel).stem)
                records.append(make_sample(_sample_id(rel), rel, label, domain, name, split, mask))
        return records

    index = root / layout.index_file
    if not index.is_file():
        raise LayoutMismatch(f"index file {index} does not exist")
    records = []
    with open(index, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"image", "label"} <= set(reader.fieldnames):
            raise LayoutMismatch(f"{index}: header must contain image,label[,mask]")
        for line_no, row in enumerate(reader, start=2):
            rel = (row.get("image") or "").strip()
            if not (root / rel).is_file():
                raise LayoutMismatch(f"{index}:{line_no}: image {rel!r} not found")
            mask = (row.get("mask") or "").strip() or None
            if mask is not None and not (root / mask).is_file():
                raise DanglingMask(f"{index}:{line_no}: mask {mask!r} not found")
            try:
                label = int(row["label"])
            except (TypeError, ValueError):
                label = row["label"]
            records.append(make_sample(_sample_id(rel), rel, label, domain, name, split, mask))
    return records


def ingest_splits(root, layouts: dict, name: str, domain: DomainTag) -> DatasetManifest:
    """Ingest several splits of one dataset into a single manifest."""
    root = Path(root)
    if not root.is_dir():
        raise LayoutMismatch(f"dataset root {root} does not exist")
    records = []
    for split, layout in layouts.items():
        records.extend(_ingest_records(root, layout, name, DomainTag(domain), SplitTag(split)))
    return _finish(records, name, DomainTag(domain))


def frame_indices(total_frames: int, k: int = 32) -> list[int]:
    """``k`` equally spaced frame indices over ``[0, total_frames)``.

    Endpoints are inclusive: index_i = round_half_up(i * (T-1) / (k-1)).
    Repeats occur when T < k.
    """
    if total_frames < 1 or k < 1:
        raise ValueError(f"need total_frames >= 1 and k >= 1, got {total_frames}, {k}")
    if k == 1:
        return [0]
    span, steps = total_frames - 1, k - 1
    # integer round-half-up of i*span/steps
    return [(2 * i * span + steps) // (2 * steps) for i in range(k)]


def merge_manifests(manifests: Sequence[DatasetManifest], name: str) -> DatasetManifest:
    """Concatenate manifests of one domain; ids become ``<source>/<id>``."""
    if not manifests:
        raise ManifestError("nothing to merge")
    domain = manifests[0].domain
    for m in manifests[1:]:
        if m.domain is not domain:
            raise DomainMismatch(f"cannot merge {m.name!r} ({m.domain.value}) into {domain.value} pool")
    records = []
    for m in manifests:
        for r in m.records:
            records.append(SampleRecord(
                f"{m.name}/{r.id}", r.image_ref, r.label, r.domain, r.dataset_name, r.split,
                r.mask_ref, r.orig_width, r.orig_height,
            ))
    return DatasetManifest.from_records(name, domain, records)


@dataclass(frozen=True)
class Issue:
    kind: str
    sample_id: str
    detail: str = ""


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.issues)

    def __len__(self) -> int:
        return len(self.issues)

    def kinds(self) -> list[str]:
        return [i.kind for i in self.issues]

    def format(self) -> str:
        return "\n".join(f"{i.kind}\t{i.sample_id}\t{i.detail}" for i in self.issues)


def validate_manifest(manifest: DatasetManifest, root) -> ValidationReport:
    """Report missing files, duplicate ids and label/mask contradictions.

    Never raises for data problems; an empty report means the manifest is
    consistent with the tree under ``root``.
    """
    root = Path(root)
    report = ValidationReport()
    seen = set()
    for r in manifest.records:
        if r.id in seen:
            report.issues.append(Issue("DuplicateId", r.id))
        seen.add(r.id)
        if not (root / r.image_ref).is_file():
            report.issues.append(Issue("MissingImage", r.id, r.image_ref))
        if r.mask_ref is None:
            continue
        mask_path = root / r.mask_ref
        if not mask_path.is_file():
            report.issues.append(Issue("MissingMask", r.id, r.mask_ref))
        elif r.label == 0:
            try:
                manipulated = int(binarize_mask(read_image(mask_path)).sum())
            except OSError as exc:
                report.issues.append(Issue("UnreadableMask", r.id, str(exc)))
                continue
            if manipulated:
                report.issues.append(Issue("LabelMaskContradiction", r.id, f"{manipulated} manipulated pixels"))
    return report
