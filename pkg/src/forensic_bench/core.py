"""Shared data vocabulary: samples, manifests, predictions, domains.

Manifests are line-delimited JSON. Line 1 is a header object, every further
line one sample record. Serialization is canonical (fixed key order, compact
separators) so a parse/emit cycle reproduces the input bytes.
"""

from __future__ import annotations

import enum
import io
import json
import math
import posixpath
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import EmptyId, InvalidLabel, ManifestError


class DomainTag(str, enum.Enum):
    DEEPFAKE = "deepfake"
    IMDL = "imdl"
    AIGC = "aigc"
    DOCUMENT = "document"


class SplitTag(str, enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


LABEL = "label"
MASK = "mask"


def dumps_line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def _check_relpath(path: str, what: str) -> str:
    # Windows separators would break relocatability on POSIX hosts.
    path = str(path).replace("\\", "/")
    if not path:
        raise ManifestError(f"{what} path is empty")
    if path.startswith("/") or (len(path) > 1 and path[1] == ":"):
        raise ManifestError(f"{what} path {path!r} must be relative to the dataset root")
    return posixpath.normpath(path)


@dataclass(frozen=True)
class SampleRecord:
    id: str
    image_ref: str
    label: int
    domain: DomainTag
    dataset_name: str
    split: SplitTag
    mask_ref: Optional[str] = None
    orig_width: Optional[int] = None
    orig_height: Optional[int] = None

    def to_dict(self) -> dict:
        d = {"id": self.id, "image": self.image_ref, "label": self.label}
        if self.mask_ref is not None:
            d["mask"] = self.mask_ref
        d["domain"] = self.domain.value
        d["dataset"] = self.dataset_name
        d["split"] = self.split.value
        if self.orig_width is not None:
            d["orig_w"] = self.orig_width
        if self.orig_height is not None:
            d["orig_h"] = self.orig_height
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        known = {"id", "image", "label", "mask", "domain", "dataset", "split", "orig_w", "orig_h"}
        extra = set(d) - known
        if extra:
            raise ManifestError(f"unknown record keys: {sorted(extra)}")
        try:
            return make_sample(
                d["id"], d["image"], d["label"], DomainTag(d["domain"]), d["dataset"],
                SplitTag(d["split"]), d.get("mask"),
                orig_width=d.get("orig_w"), orig_height=d.get("orig_h"),
            )
        except KeyError as exc:
            raise ManifestError(f"record missing key {exc.args[0]!r}") from None


def make_sample(
    id: str,
    image_ref: str,
    label: int,
    domain: DomainTag,
    dataset: str,
    split: SplitTag,
    mask_ref: Optional[str] = None,
    *,
    orig_width: Optional[int] = None,
    orig_height: Optional[int] = None,
) -> SampleRecord:
    """Build a validated :class:`SampleRecord`.

    Raises ``InvalidLabel`` unless label is the integer 0 or 1 and
    ``EmptyId`` for a blank id.
    """
    if not isinstance(id, str) or not id.strip():
        raise EmptyId("sample id must be a non-blank string")
    if isinstance(label, bool) or not isinstance(label, int) or label not in (0, 1):
        raise InvalidLabel(f"label must be 0 or 1, got {label!r}")
    for dim, name in ((orig_width, "orig_width"), (orig_height, "orig_height")):
        if dim is not None and (isinstance(dim, bool) or not isinstance(dim, int) or dim < 1):
            raise ManifestError(f"{name} must be a positive integer, got {dim!r}")
    return SampleRecord(
        id=id,
        image_ref=_check_relpath(image_ref, "image"),
        label=label,
        domain=DomainTag(domain),
        dataset_name=dataset,
        split=SplitTag(split),
        mask_ref=None if mask_ref is None else _check_relpath(mask_ref, "mask"),
        orig_width=orig_width,
        orig_height=orig_height,
    )


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    domain: DomainTag
    records: tuple[SampleRecord, ...]
    real_count: int
    fake_count: int
    annotation: frozenset[str]

    def __post_init__(self):
        real = sum(1 for r in self.records if r.label == 0)
        if (real, len(self.records) - real) != (self.real_count, self.fake_count):
            raise ManifestError(
                f"manifest {self.name!r}: stored counts {self.real_count}/{self.fake_count} "
                f"disagree with records {real}/{len(self.records) - real}"
            )
        has_mask = any(r.mask_ref is not None for r in self.records)
        if (MASK in self.annotation) != has_mask or not self.annotation <= {LABEL, MASK}:
            raise ManifestError(f"manifest {self.name!r}: annotation {sorted(self.annotation)} inconsistent")

    @classmethod
    def from_records(cls, name: str, domain: DomainTag, records: Iterable[SampleRecord]) -> "DatasetManifest":
        records = tuple(records)
        real = sum(1 for r in records if r.label == 0)
        annotation = {LABEL}
        if any(r.mask_ref is not None for r in records):
            annotation.add(MASK)
        return cls(name, DomainTag(domain), records, real, len(records) - real, frozenset(annotation))

    def __len__(self) -> int:
        return len(self.records)

    def by_split(self, split: SplitTag) -> tuple[SampleRecord, ...]:
        split = SplitTag(split)
        return tuple(r for r in self.records if r.split is split)

    def header(self) -> dict:
        return {
            "name": self.name,
            "domain": self.domain.value,
            "real_count": self.real_count,
            "fake_count": self.fake_count,
            "annotation": sorted(self.annotation),
        }

    def dumps(self) -> str:
        out = io.StringIO()
        out.write(dumps_line(self.header()) + "\n")
        for r in self.records:
            out.write(dumps_line(r.to_dict()) + "\n")
        return out.getvalue()

    @classmethod
    def loads(cls, text: str) -> "DatasetManifest":
        lines = text.splitlines()
        if not lines:
            raise ManifestError("manifest is empty (missing header line)")
        try:
            head = json.loads(lines[0])
            name, domain = head["name"], DomainTag(head["domain"])
            real, fake, annotation = head["real_count"], head["fake_count"], frozenset(head["annotation"])
        except (KeyError, ValueError, TypeError) as exc:
            raise ManifestError(f"bad manifest header: {exc}") from None
        records = []
        for i, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"line {i}: {exc}") from None
            records.append(SampleRecord.from_dict(obj))
        return cls(name, domain, tuple(records), real, fake, annotation)

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())
        return path

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class PredictionRecord:
    """One model output. ``score`` is P(fake); it may be None for models
    that only emit a probability map, in which case the image-level score
    is derived from the map."""

    sample_id: str
    score: Optional[float] = None
    mask_score_ref: Optional[str] = None

    def __post_init__(self):
        if self.score is None and self.mask_score_ref is None:
            raise ManifestError(f"prediction {self.sample_id!r} has neither score nor mask")

    def to_dict(self) -> dict:
        d = {"id": self.sample_id, "score": self.score}
        if self.mask_score_ref is not None:
            d["mask"] = self.mask_score_ref
        return d


def check_score(value, where: str = "score") -> float:
    from .errors import ScoreOutOfRange

    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScoreOutOfRange(f"{where}: score must be a number, got {value!r}")
    value = float(value)
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise ScoreOutOfRange(f"{where}: score {value!r} outside [0, 1]")
    return value


def write_predictions(predictions: Sequence[PredictionRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in predictions:
            fh.write(dumps_line(p.to_dict()) + "\n")
    return path
