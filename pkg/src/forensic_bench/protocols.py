"""Evaluation protocols and the per-epoch balanced sampler for domain fusion."""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import DatasetManifest, DomainTag, SampleRecord, SplitTag, dumps_line
from .errors import (
    EmptyMask,
    EmptyPool,
    ManifestError,
    MissingDataset,
    MissingSplit,
    UnknownProtocol,
)

DatasetRef = tuple[str, SplitTag]


@dataclass(frozen=True)
class EvalGroup:
    name: str
    refs: tuple[DatasetRef, ...]


@dataclass(frozen=True)
class Aggregate:
    name: str
    groups: tuple[str, ...]


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    train_refs: tuple[DatasetRef, ...]
    eval_groups: tuple[EvalGroup, ...]
    aggregates: tuple[Aggregate, ...] = ()
    # "level.metric" shown in reports when the config does not choose one
    default_metric: str = "image.AUC"

    def __post_init__(self):
        names = [g.name for g in self.eval_groups]
        if len(set(names)) != len(names):
            raise ValueError(f"protocol {self.name!r}: duplicate group names")
        known = set(names)
        for agg in self.aggregates:
            missing = [g for g in agg.groups if g not in known]
            if missing or not agg.groups:
                raise ValueError(f"protocol {self.name!r}: aggregate {agg.name!r} references unknown groups {missing}")

    @property
    def group_names(self) -> tuple[str, ...]:
        return tuple(g.name for g in self.eval_groups)

    def referenced_datasets(self) -> list[str]:
        seen = []
        for name, _ in list(self.train_refs) + [r for g in self.eval_groups for r in g.refs]:
            if name not in seen:
                seen.append(name)
        return seen


def _groups(pairs) -> tuple[EvalGroup, ...]:
    return tuple(EvalGroup(name, tuple((d, SplitTag.TEST) for d in ds)) for name, ds in pairs)


GENIMAGE_SUBSETS = (
    ("ADM", "GenImage_ADM"),
    ("BigGAN", "GenImage_BigGAN"),
    ("Midjourney", "GenImage_Midjourney"),
    ("VQDM", "GenImage_VQDM"),
    ("GLIDE", "GenImage_glide"),
    ("SD V1.4", "GenImage_sd14"),
    ("SD V1.5", "GenImage_sd15"),
    ("Wukong", "GenImage_wukong"),
)

DOC_WITHIN = (("DocTamperFCD", "DocTamperFCD"), ("DocTamperSCD", "DocTamperSCD"), ("DocTamperTest", "DocTamperTest"))
DOC_CROSS = (("T-SROIE", "T-SROIE"), ("OSTF", "OSTF"), ("TPIC-13", "Tampered-IC13"), ("RTM", "RealTextManipulation"))

IFF_TRAIN = (
    ("FaceForensics++", DomainTag.DEEPFAKE),
    ("CASIAv2", DomainTag.IMDL),
    ("GenImage", DomainTag.AIGC),
    ("OSTF", DomainTag.DOCUMENT),
    ("RealTextManipulation", DomainTag.DOCUMENT),
    ("T-SROIE", DomainTag.DOCUMENT),
    ("Tampered-IC13", DomainTag.DOCUMENT),
)
IFF_EVAL = (
    ("FF-c40", "FF++c40"), ("CDFv2", "CDFv2"), ("DFD", "DFD"),
    ("Columbia", "Columbia"), ("IMD2020", "IMD2020"), ("Autosplice", "Autosplice"),
    ("DF", "DiffusionForensics"), ("GenImage", "GenImage"),
    ("T-SROIE", "T-SROIE"), ("OSTF", "OSTF"), ("RTM", "RealTextManipulation"),
)


def builtin_protocol(name: str) -> ProtocolSpec:
    """The AIGC, document and fusion (``iff``) protocols."""
    if name == "aigc":
        groups = _groups([("DiffusionForensics", ["DiffusionForensics"])] + [(g, [d]) for g, d in GENIMAGE_SUBSETS])
        cross = tuple(g for g, _ in GENIMAGE_SUBSETS)
        return ProtocolSpec(
            "aigc", (("DiffusionForensics", SplitTag.TRAIN),), groups,
            (Aggregate("Average_C", cross),), default_metric="image.AUC",
        )
    if name == "doc":
        groups = _groups([(g, [d]) for g, d in DOC_WITHIN + DOC_CROSS])
        within = tuple(g for g, _ in DOC_WITHIN)
        cross = tuple(g for g, _ in DOC_CROSS)
        return ProtocolSpec(
            "doc", (("DocTamper", SplitTag.TRAIN),), groups,
            (Aggregate("Average_W", within), Aggregate("Average_C", cross), Aggregate("Average_All", within + cross)),
            default_metric="pixel.F1",
        )
    if name == "iff":
        groups = _groups([(g, [d]) for g, d in IFF_EVAL])
        return ProtocolSpec(
            "iff", tuple((d, SplitTag.TRAIN) for d, _ in IFF_TRAIN), groups,
            (Aggregate("Average", tuple(g for g, _ in IFF_EVAL)),), default_metric="image.AUC",
        )
    raise UnknownProtocol(f"unknown protocol {name!r}; builtin protocols are aigc, doc, iff")


BUILTIN_PROTOCOLS = ("aigc", "doc", "iff")


@dataclass(frozen=True)
class ResolvedGroup:
    name: str
    records: tuple[SampleRecord, ...]


@dataclass(frozen=True)
class ResolvedProtocol:
    spec: ProtocolSpec
    train: tuple[SampleRecord, ...]
    groups: tuple[ResolvedGroup, ...]

    def train_pools(self) -> dict[DomainTag, list[str]]:
        """Training ids per domain, qualified as ``<dataset>/<id>``."""
        pools: dict[DomainTag, list[str]] = {}
        for r in self.train:
            pools.setdefault(r.domain, []).append(f"{r.dataset_name}/{r.id}")
        return pools


def _bind(refs: Sequence[DatasetRef], manifests: Mapping[str, DatasetManifest], where: str,
          unique: bool = True) -> tuple[SampleRecord, ...]:
    out: list[SampleRecord] = []
    seen: set[str] = set()
    for name, split in refs:
        if name not in manifests:
            raise MissingDataset(name)
        recs = manifests[name].by_split(split)
        if not recs:
            raise MissingSplit(name, SplitTag(split).value)
        for r in recs if unique else ():
            if r.id in seen:
                raise ManifestError(f"{where}: sample id {r.id!r} appears in more than one bound dataset")
            seen.add(r.id)
        out.extend(recs)
    return tuple(out)


def resolve_protocol(spec: ProtocolSpec, manifests: Mapping[str, DatasetManifest], *, with_train: bool = True) -> ResolvedProtocol:
    """Bind every group (and optionally the training pool) to manifest records."""
    groups = tuple(ResolvedGroup(g.name, _bind(g.refs, manifests, g.name)) for g in spec.eval_groups)
    train = _bind(spec.train_refs, manifests, "train", unique=False) if with_train else ()
    return ResolvedProtocol(spec, train, groups)


def mask_to_label(mask_scores) -> float:
    """Image-level score of a probability map: its maximum value."""
    from .metrics import to_probability

    arr = np.asarray(mask_scores)
    if arr.size == 0:
        raise EmptyMask("probability map is empty")
    if arr.dtype in (np.uint8, np.uint16):
        return float(to_probability(arr.max()))
    return float(to_probability(arr).max())


@dataclass(frozen=True)
class EpochPlan:
    epoch: int
    seed: int
    epoch_size: int
    draws: dict[DomainTag, tuple[str, ...]] = field(hash=False)

    def total(self) -> int:
        return sum(len(v) for v in self.draws.values())

    def dumps(self) -> str:
        out = io.StringIO()
        out.write(dumps_line({"seed": self.seed, "epoch": self.epoch, "epoch_size": self.epoch_size}) + "\n")
        for domain in DomainTag:
            for sid in self.draws.get(domain, ()):
                out.write(dumps_line({"domain": domain.value, "sample_id": sid}) + "\n")
        return out.getvalue()

    @classmethod
    def loads(cls, text: str) -> "EpochPlan":
        lines = [l for l in text.splitlines() if l.strip()]
        head = json.loads(lines[0])
        draws: dict[DomainTag, list[str]] = {}
        for line in lines[1:]:
            obj = json.loads(line)
            draws.setdefault(DomainTag(obj["domain"]), []).append(obj["sample_id"])
        return cls(head["epoch"], head["seed"], head["epoch_size"], {d: tuple(v) for d, v in draws.items()})

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())
        return path


_DOMAIN_CODE = {d: i for i, d in enumerate(DomainTag)}
_U64 = (1 << 64) - 1


def _philox(seed: int, epoch: int, domain: DomainTag) -> np.random.Philox:
    # Philox is counter-based: the stream is a pure function of this key, and
    # its raw output is fixed by the algorithm, not by numpy's sampling code.
    digest = hashlib.blake2b(struct.pack("<QQQ", seed & _U64, epoch & _U64, _DOMAIN_CODE[domain]),
                             digest_size=16, person=b"iff-epoch-plan").digest()
    key = np.frombuffer(digest, dtype="<u8").astype(np.uint64)
    return np.random.Philox(key=key)


def _draw(pool_size: int, k: int, bitgen: np.random.Philox) -> np.ndarray:
    raw = bitgen.random_raw(pool_size if pool_size >= k else k)
    if pool_size >= k:
        # random sort keys -> uniform permutation; index breaks (improbable) ties
        order = np.lexsort((np.arange(pool_size), raw))
        return order[:k]
    # with replacement: top 53 bits as a uniform in [0, 1)
    u = (raw[:k] >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
    return np.minimum((u * pool_size).astype(np.int64), pool_size - 1)


def iff_epoch_plan(
    pools: Mapping[DomainTag, Sequence[str]],
    epoch_size: Optional[int] = None,
    seed: int = 0,
    epoch: int = 0,
) -> EpochPlan:
    """Draw the same number of training ids from every domain pool.

    ``epoch_size`` defaults to the smallest pool. Draws are without
    replacement unless a pool is smaller than ``epoch_size``.
    """
    if not pools:
        raise EmptyPool("no domain pools given")
    for domain, ids in pools.items():
        if len(ids) == 0:
            raise EmptyPool(f"domain {DomainTag(domain).value} has no samples")
    if epoch_size is None:
        epoch_size = min(len(ids) for ids in pools.values())
    if epoch_size < 1:
        raise ValueError(f"epoch_size must be positive, got {epoch_size}")
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    draws = {}
    for domain in DomainTag:
        if domain not in pools and domain.value not in pools:
            continue
        ids = list(pools.get(domain, pools.get(domain.value, ())))
        picked = _draw(len(ids), epoch_size, _philox(seed, epoch, domain))
        draws[domain] = tuple(ids[i] for i in picked)
    return EpochPlan(epoch, seed, epoch_size, draws)
