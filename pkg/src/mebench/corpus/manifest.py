"""Joint manifest construction, persistence, and distribution summaries.

The manifest file is line-delimited UTF-8 JSON: the first line is a
tagged provenance object, each following line is one sample record.
Records with an Excluded emotion stay in the file (totals remain
reconcilable) but never appear in the eligible() view.
"""

from __future__ import annotations

import csv
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from ..errors import DataError
from ..runutil import atomic_write_text
from .records import Dataset, MappedEmotion, RawEthnicity, SampleRecord

_INDEX_COLUMNS = ("subject", "clip", "onset", "apex", "emotion")


class MissingColumnError(DataError):
    pass


class DuplicateKeyError(DataError):
    pass


class DanglingPathError(DataError):
    pass


def ingest_dataset_index(index_path, dataset_kind: Dataset) -> list[SampleRecord]:
    """Read a delimited index table into raw records (mappings unset).

    Expected columns: subject, clip, onset, apex, emotion. Comma and tab
    delimiters are both accepted; frame paths are resolved relative to
    the index file's directory. Raw emotion strings are stored verbatim
    but case-folded.
    """
    index_path = Path(index_path)
    if not index_path.exists():
        raise FileNotFoundError(f"index not found: {index_path}")
    text = index_path.read_text(encoding="utf-8")
    delimiter = "\t" if "\t" in text.splitlines()[0] else ","
    reader = csv.DictReader(text.splitlines(), delimiter=delimiter)
    header = [h.strip().casefold() for h in (reader.fieldnames or [])]
    missing = [c for c in _INDEX_COLUMNS if c not in header]
    if missing:
        raise MissingColumnError(f"{index_path}: missing columns {missing}; found {header}")

    records: list[SampleRecord] = []
    seen: set[tuple[str, str]] = set()
    base = index_path.parent
    for row in reader:
        row = {k.strip().casefold(): (v or "").strip() for k, v in row.items() if k is not None}
        key = (row["subject"], row["clip"])
        if key in seen:
            raise DuplicateKeyError(f"{index_path}: duplicate (subject, clip) = {key}")
        seen.add(key)
        onset = base / row["onset"]
        apex = base / row["apex"]
        for p in (onset, apex):
            if not p.exists():
                raise DanglingPathError(f"{index_path}: frame path does not exist: {p}")
        records.append(
            SampleRecord(
                dataset=dataset_kind,
                subject_id=row["subject"],
                clip_id=row["clip"],
                onset_path=str(onset),
                apex_path=str(apex),
                raw_emotion=row["emotion"].casefold(),
            )
        )
    return records


@dataclass(frozen=True)
class Manifest:
    """Validated record collection plus the provenance needed to replay it."""

    records: tuple[SampleRecord, ...]
    provenance: dict = field(default_factory=dict)

    def eligible(self) -> list[SampleRecord]:
        """Records that enter training/evaluation splits."""
        return [r for r in self.records if r.eligible]

    def subjects(self) -> list[str]:
        return sorted({r.subject_id for r in self.records})


def build_manifest(records: Iterable[SampleRecord], provenance: dict, check_paths: bool = True) -> Manifest:
    records = list(records)
    seen: dict[tuple[str, str], SampleRecord] = {}
    subject_datasets: dict[str, str] = {}
    for rec in records:
        if rec.key in seen:
            raise DuplicateKeyError(f"duplicate (subject_id, clip_id) = {rec.key}")
        seen[rec.key] = rec
        prev = subject_datasets.setdefault(rec.subject_id, rec.dataset.value)
        if prev != rec.dataset.value:
            raise DataError(
                f"subject_id {rec.subject_id!r} appears in both {prev} and {rec.dataset.value}; "
                "disambiguate subject ids in the dataset indices"
            )
        if check_paths:
            for p in (rec.onset_path, rec.apex_path):
                if not Path(p).exists():
                    raise DanglingPathError(f"record {rec.key}: missing frame {p}")
    return Manifest(records=tuple(records), provenance=dict(provenance))


def save_manifest(manifest: Manifest, path) -> None:
    """Frame paths are stored relative to the manifest file, so generated
    corpora are byte-identical regardless of the output directory."""
    path = Path(path)
    base = path.resolve().parent
    lines = [json.dumps({"type": "provenance", **manifest.provenance}, sort_keys=True)]
    for rec in manifest.records:
        d = rec.to_json_dict()
        for field_name in ("onset_path", "apex_path"):
            p = Path(d[field_name])
            if p.is_absolute():
                d[field_name] = os.path.relpath(p, base)
        lines.append(json.dumps(d, sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_manifest(path) -> Manifest:
    path = Path(path)
    base = path.resolve().parent
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty manifest")
    head = json.loads(lines[0])
    if head.get("type") != "provenance":
        raise DataError(f"{path}: first line must be the provenance object")
    head.pop("type")
    records = []
    for ln in lines[1:]:
        d = json.loads(ln)
        for field_name in ("onset_path", "apex_path"):
            p = Path(d[field_name])
            if not p.is_absolute():
                d[field_name] = str(base / p)
        records.append(SampleRecord.from_json_dict(d))
    return build_manifest(records, head, check_paths=False)


@dataclass(frozen=True)
class DistributionReport:
    """Counts mirroring the published subject/video/emotion breakdowns."""

    subjects_by_raw_ethnicity: dict
    subjects_by_mapped_ethnicity: dict
    videos_by_raw_ethnicity: dict
    videos_by_mapped_ethnicity: dict
    videos_by_raw_emotion: dict
    videos_by_mapped_emotion: dict
    total_subjects: int
    total_videos: int
    eligible_videos: int

    @property
    def excluded_videos(self) -> int:
        return self.total_videos - self.eligible_videos

    def to_lines(self) -> list[str]:
        out = ["# Subjects per ethnicity"]
        for raw, n in sorted(self.subjects_by_raw_ethnicity.items()):
            out.append(f"  {raw:<10} -> {map_to_group(raw):<9} {n}")
        out.append(f"  total subjects: {self.total_subjects} "
                   f"(Asian {self.subjects_by_mapped_ethnicity.get('Asian', 0)}, "
                   f"NonAsian {self.subjects_by_mapped_ethnicity.get('NonAsian', 0)})")
        out.append("# Videos per ethnicity")
        for raw, n in sorted(self.videos_by_raw_ethnicity.items()):
            out.append(f"  {raw:<10} -> {map_to_group(raw):<9} {n}")
        out.append(f"  total videos: {self.total_videos} "
                   f"(Asian {self.videos_by_mapped_ethnicity.get('Asian', 0)}, "
                   f"NonAsian {self.videos_by_mapped_ethnicity.get('NonAsian', 0)})")
        out.append("# Videos per emotion")
        for raw, n in sorted(self.videos_by_raw_emotion.items()):
            out.append(f"  {raw:<10} {n}")
        for mapped, n in sorted(self.videos_by_mapped_emotion.items()):
            out.append(f"  mapped {mapped:<9} {n}")
        out.append(f"  eligible videos: {self.eligible_videos} "
                   f"(total {self.total_videos}, excluded {self.excluded_videos})")
        return out


def map_to_group(raw_name: str) -> str:
    from .records import map_ethnicity

    return map_ethnicity(RawEthnicity(raw_name)).value


def summarize_distribution(source: Manifest | Iterable[SampleRecord]) -> DistributionReport:
    """Per-label counts by subject and by video, raw and mapped."""
    records = list(source.records) if isinstance(source, Manifest) else list(source)
    if not records:
        raise DataError("no records to summarize")

    subject_eth: dict[str, RawEthnicity] = {}
    for rec in records:
        if rec.raw_ethnicity is None or rec.mapped_emotion is None:
            raise DataError(f"record {rec.key} not fully annotated/mapped")
        prev = subject_eth.setdefault(rec.subject_id, rec.raw_ethnicity)
        if prev != rec.raw_ethnicity:
            raise DataError(f"subject {rec.subject_id!r} has inconsistent ethnicity annotations")

    subj_raw = Counter(eth.value for eth in subject_eth.values())
    subj_mapped = Counter(map_to_group(eth.value) for eth in subject_eth.values())
    vid_raw = Counter(rec.raw_ethnicity.value for rec in records)
    vid_mapped = Counter(rec.mapped_ethnicity.value for rec in records if rec.mapped_ethnicity)
    emo_raw = Counter(rec.raw_emotion for rec in records)
    emo_mapped = Counter(
        rec.mapped_emotion.value for rec in records if rec.mapped_emotion != MappedEmotion.EXCLUDED
    )
    eligible = sum(1 for rec in records if rec.eligible)
    return DistributionReport(
        subjects_by_raw_ethnicity=dict(subj_raw),
        subjects_by_mapped_ethnicity=dict(subj_mapped),
        videos_by_raw_ethnicity=dict(vid_raw),
        videos_by_mapped_ethnicity=dict(vid_mapped),
        videos_by_raw_emotion=dict(emo_raw),
        videos_by_mapped_emotion=dict(emo_mapped),
        total_subjects=len(subject_eth),
        total_videos=len(records),
        eligible_videos=eligible,
    )
