"""Community QA corpora: task formats, canonical records, benchmark adapters.

Four benchmark layouts are understood natively (aqua, csqa, obqa, stqa) plus
the package's own canonical line format, which round-trips losslessly. A
dataset is immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

MC_LABELS = ("A", "B", "C", "D", "E")
TF_LABELS = ("True", "False")

CANONICAL_VERSION = 1

# Accepted spellings for True/False gold answers across benchmark versions.
_TF_NORMALIZATION = {
    "true": "True",
    "false": "False",
    "yes": "True",
    "no": "False",
}


class CorpusError(Exception):
    """Base class for dataset ingestion errors."""


class MalformedRecord(CorpusError):
    def __init__(self, record_id: str, reason: str):
        super().__init__(f"record {record_id!r}: {reason}")
        self.record_id = record_id
        self.reason = reason


class FormatViolation(CorpusError):
    """Gold label not among the dataset's option labels."""


class EmptyDataset(CorpusError):
    pass


class TooFewRecords(CorpusError):
    pass


class FormatKind(str, Enum):
    MULTIPLE_CHOICE = "multiple_choice"
    TRUE_FALSE = "true_false"


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class TaskFormat:
    """Answer format of one community: the kind plus its ordered label set."""

    kind: FormatKind
    option_labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(self.option_labels)
        object.__setattr__(self, "option_labels", labels)
        if self.kind is FormatKind.TRUE_FALSE:
            if labels != TF_LABELS:
                raise FormatViolation(
                    f"true/false format must use labels {TF_LABELS}, got {labels}"
                )
        else:
            if len(labels) < 2:
                raise FormatViolation("multiple choice needs at least 2 labels")
            if len(set(labels)) != len(labels):
                raise FormatViolation(f"duplicate option labels: {labels}")
            for lab in labels:
                if not (len(lab) == 1 and lab.isalpha() and lab.isupper()):
                    raise FormatViolation(f"label {lab!r} is not an uppercase letter")
            if labels != tuple(sorted(labels)):
                raise FormatViolation(f"labels not in canonical order: {labels}")

    @classmethod
    def multiple_choice(cls, n_options: int = 5) -> "TaskFormat":
        return cls(FormatKind.MULTIPLE_CHOICE, MC_LABELS[:n_options])

    @classmethod
    def true_false(cls) -> "TaskFormat":
        return cls(FormatKind.TRUE_FALSE, TF_LABELS)


@dataclass(frozen=True)
class QARecord:
    """One question: id, text, labelled choices (empty for True/False), gold label."""

    id: str
    question: str
    choices: tuple[tuple[str, str], ...]
    gold_label: str

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(tuple(c) for c in self.choices))

    def validate(self, fmt: TaskFormat) -> None:
        if not self.question.strip():
            raise MalformedRecord(self.id, "empty question")
        if self.gold_label not in fmt.option_labels:
            raise FormatViolation(
                f"record {self.id!r}: gold label {self.gold_label!r} "
                f"not among options {fmt.option_labels}"
            )
        if fmt.kind is FormatKind.MULTIPLE_CHOICE:
            got = tuple(lab for lab, _ in self.choices)
            if got != fmt.option_labels:
                raise MalformedRecord(
                    self.id, f"choice labels {got} != format labels {fmt.option_labels}"
                )
        elif self.choices:
            raise MalformedRecord(self.id, "true/false record must not carry choices")


@dataclass(frozen=True)
class SkippedRecord:
    record_id: str
    reason: str


@dataclass(frozen=True)
class CommunityDataset:
    """A community's corpus for one split. Records are validated on construction."""

    community_id: str
    format: TaskFormat
    split: Split
    records: tuple[QARecord, ...]
    skipped: tuple[SkippedRecord, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "skipped", tuple(self.skipped))
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise MalformedRecord(rec.id, "duplicate record id")
            seen.add(rec.id)
            rec.validate(self.format)

    def __len__(self) -> int:
        return len(self.records)

    def record_ids(self) -> list[str]:
        return [r.id for r in self.records]

    def questions(self) -> list[str]:
        return [r.question for r in self.records]

    def by_id(self) -> dict[str, QARecord]:
        return {r.id: r for r in self.records}


def render_choices(record: QARecord) -> str:
    """Render the answer options of a record as prompt/feature text."""
    if not record.choices:
        return "Options: True, False"
    return "\n".join(f"{label}) {text}" for label, text in record.choices)


def normalize_tf_label(value) -> str:
    """Map the benchmark spellings of a True/False answer onto 'True'/'False'."""
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, str):
        norm = _TF_NORMALIZATION.get(value.strip().lower())
        if norm is not None:
            return norm
    raise ValueError(f"not a true/false answer: {value!r}")


# ---------------------------------------------------------------------------
# Source adapters. Each maps one raw line/object to (id, question, choices,
# gold); unknown fields are ignored, missing required fields raise KeyError
# which the loader reports as MalformedRecord.
# ---------------------------------------------------------------------------


def _adapt_aqua(obj: dict, index: int) -> QARecord:
    question = obj["question"]
    options = obj["options"]
    choices = []
    for opt in options:
        label, _, text = str(opt).partition(")")
        choices.append((label.strip(), text.strip()))
    return QARecord(
        id=str(obj.get("id", f"aqua-{index:05d}")),
        question=question,
        choices=tuple(choices),
        gold_label=str(obj["correct"]).strip(),
    )


def _adapt_arc_style(obj: dict, index: int, prefix: str) -> QARecord:
    # CSQA and OBQA share the ARC-style nested layout.
    q = obj["question"]
    choices = tuple(
        (str(c["label"]).strip(), str(c["text"])) for c in q["choices"]
    )
    choices = tuple(sorted(choices, key=lambda c: c[0]))
    return QARecord(
        id=str(obj.get("id", f"{prefix}-{index:05d}")),
        question=q["stem"],
        choices=choices,
        gold_label=str(obj["answerKey"]).strip(),
    )


def _adapt_stqa(obj: dict, index: int) -> QARecord:
    rec_id = str(obj.get("qid", obj.get("id", f"stqa-{index:05d}")))
    try:
        gold = normalize_tf_label(obj["answer"])
    except ValueError as exc:
        raise MalformedRecord(rec_id, str(exc)) from exc
    return QARecord(id=rec_id, question=obj["question"], choices=(), gold_label=gold)


_ADAPTERS = {
    "aqua": lambda obj, i: _adapt_aqua(obj, i),
    "csqa": lambda obj, i: _adapt_arc_style(obj, i, "csqa"),
    "obqa": lambda obj, i: _adapt_arc_style(obj, i, "obqa"),
    "stqa": lambda obj, i: _adapt_stqa(obj, i),
}

SCHEMAS = ("aqua", "csqa", "obqa", "stqa", "canonical")


def _read_objects(path: Path) -> list[dict]:
    """Read a JSON array file or a JSONL file into a list of objects."""
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        return json.loads(text)
    objs = []
    for line in text.splitlines():
        if line.strip():
            objs.append(json.loads(line))
    return objs


def _infer_format(records: list[QARecord], schema: str) -> TaskFormat:
    if schema == "stqa":
        return TaskFormat.true_false()
    first = records[0]
    if not first.choices:
        return TaskFormat.true_false()
    return TaskFormat(FormatKind.MULTIPLE_CHOICE, tuple(lab for lab, _ in first.choices))


def load_dataset(
    path: str | Path,
    schema: str,
    *,
    community_id: str | None = None,
    split: Split | str = Split.TRAIN,
    on_error: str = "raise",
) -> CommunityDataset:
    """Load one community dataset from disk.

    ``schema`` is one of ``aqua``, ``csqa``, ``obqa``, ``stqa``, ``canonical``.
    With ``on_error="skip"`` malformed records are collected on the returned
    dataset's ``skipped`` list instead of raising, so that
    ``len(ds) + len(ds.skipped)`` always equals the source record count.
    """
    path = Path(path)
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}, expected one of {SCHEMAS}")
    if on_error not in ("raise", "skip"):
        raise ValueError("on_error must be 'raise' or 'skip'")
    if schema == "canonical":
        return _load_canonical(path, on_error=on_error)

    split = Split(split)
    community_id = community_id or schema
    objs = _read_objects(path)
    adapter = _ADAPTERS[schema]

    records: list[QARecord] = []
    skipped: list[SkippedRecord] = []
    for i, obj in enumerate(objs):
        try:
            records.append(adapter(obj, i))
        except (CorpusError, KeyError, TypeError, ValueError) as exc:
            if on_error == "raise":
                if isinstance(exc, CorpusError):
                    raise
                raise MalformedRecord(str(obj.get("id", i)), str(exc)) from exc
            skipped.append(SkippedRecord(str(obj.get("id", i)), str(exc)))
    if not records:
        raise EmptyDataset(f"{path}: no loadable records")

    fmt = _infer_format(records, schema)
    if on_error == "skip":
        kept: list[QARecord] = []
        for rec in records:
            try:
                rec.validate(fmt)
                kept.append(rec)
            except CorpusError as exc:
                skipped.append(SkippedRecord(rec.id, str(exc)))
        if not kept:
            raise EmptyDataset(f"{path}: no loadable records")
        return CommunityDataset(community_id, fmt, split, tuple(kept), tuple(skipped))
    return CommunityDataset(community_id, fmt, split, tuple(records), tuple(skipped))


def _load_canonical(path: Path, on_error: str = "raise") -> CommunityDataset:
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise EmptyDataset(f"{path}: empty file")
    header = json.loads(lines[0])
    for key in ("community", "format", "split", "version"):
        if key not in header:
            raise MalformedRecord("<header>", f"missing header key {key!r}")
    if header["version"] != CANONICAL_VERSION:
        raise MalformedRecord("<header>", f"unsupported version {header['version']}")
    fmt = TaskFormat(FormatKind(header["format"]["kind"]), tuple(header["format"]["labels"]))

    records: list[QARecord] = []
    skipped: list[SkippedRecord] = []
    for i, line in enumerate(lines[1:]):
        try:
            obj = json.loads(line)
            rec = QARecord(
                id=str(obj["id"]),
                question=obj["question"],
                choices=tuple((c["label"], c["text"]) for c in obj["choices"]),
                gold_label=obj["gold"],
            )
            rec.validate(fmt)
            records.append(rec)
        except (CorpusError, KeyError, TypeError, ValueError) as exc:
            if on_error == "raise":
                if isinstance(exc, CorpusError):
                    raise
                raise MalformedRecord(f"<line {i + 2}>", str(exc)) from exc
            skipped.append(SkippedRecord(f"<line {i + 2}>", str(exc)))
    if not records:
        raise EmptyDataset(f"{path}: no loadable records")
    return CommunityDataset(
        header["community"], fmt, Split(header["split"]), tuple(records), tuple(skipped)
    )


def save_canonical(ds: CommunityDataset, path: str | Path) -> None:
    """Write a dataset in the canonical line format (header line + one record per line)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "community": ds.community_id,
        "format": {"kind": ds.format.kind.value, "labels": list(ds.format.option_labels)},
        "split": ds.split.value,
        "version": CANONICAL_VERSION,
    }
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in ds.records:
            obj = {
                "id": rec.id,
                "question": rec.question,
                "choices": [{"label": lab, "text": txt} for lab, txt in rec.choices],
                "gold": rec.gold_label,
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def split_dataset(
    ds: CommunityDataset, test_fraction: float, seed: int
) -> tuple[CommunityDataset, CommunityDataset]:
    """Partition a dataset into disjoint train/test datasets.

    The test side receives floor(n * test_fraction) records chosen by a seeded
    permutation; both sides keep the source record order. Deterministic for a
    given (dataset, fraction, seed).
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(ds.records)
    if n < 2:
        raise TooFewRecords(f"cannot split {n} record(s)")
    n_test = int(math.floor(n * test_fraction + 1e-9))
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = set(perm[:n_test].tolist())
    train_recs = tuple(r for i, r in enumerate(ds.records) if i not in test_idx)
    test_recs = tuple(r for i, r in enumerate(ds.records) if i in test_idx)
    train = CommunityDataset(ds.community_id, ds.format, Split.TRAIN, train_recs)
    test = CommunityDataset(ds.community_id, ds.format, Split.TEST, test_recs)
    return train, test
