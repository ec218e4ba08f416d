"""OffensEval-style TSV ingestion, stratified train/dev splitting and class counts."""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import (
    CorpusDecodeError,
    LabelParseError,
    SchemaError,
    StratificationError,
    TSVFormatError,
)

LABELS = {"OFF": 1, "NOT": 0}
LABEL_NAMES = {v: k for k, v in LABELS.items()}


@dataclass(frozen=True)
class TSVSchema:
    id: str = "id"
    text: str = "tweet"
    label: str = "subtask_a"


DEFAULT_SCHEMA = TSVSchema()


@dataclass(frozen=True)
class LabeledTweet:
    id: str
    text: str
    label: Optional[int] = None


@dataclass(frozen=True)
class DataSplit:
    train: tuple
    dev: tuple
    seed: int
    ratio: float


def _decode(path: Path) -> str:
    raw = path.read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusDecodeError(str(path), exc.start, exc.reason) from None


def load_tsv(path, schema: TSVSchema = DEFAULT_SCHEMA, labeled: Optional[bool] = True) -> list:
    """Read a tab-separated corpus file into ``LabeledTweet`` records.

    ``labeled=True`` requires the label column, ``False`` ignores it and
    ``None`` uses it only when present. Row numbers in errors are 1-based
    file line numbers, so the header is line 1.
    """
    path = Path(path)
    lines = _decode(path).split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [line[:-1] if line.endswith("\r") else line for line in lines]
    if not lines:
        raise SchemaError(schema.id, str(path))

    header = lines[0].split("\t")
    for column in (schema.id, schema.text):
        if column not in header:
            raise SchemaError(column, str(path))
    has_label = schema.label in header
    if labeled and not has_label:
        raise SchemaError(schema.label, str(path))
    use_label = has_label and labeled is not False

    id_col = header.index(schema.id)
    text_col = header.index(schema.text)
    label_col = header.index(schema.label) if use_label else None

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != len(header):
            raise TSVFormatError(
                lineno, f"expected {len(header)} tab-separated fields, found {len(fields)}"
            )
        text = fields[text_col]
        if not text.strip():
            raise TSVFormatError(lineno, "empty tweet text")
        label = None
        if label_col is not None:
            value = fields[label_col].strip()
            if value not in LABELS:
                raise LabelParseError(lineno, value)
            label = LABELS[value]
        records.append(LabeledTweet(fields[id_col], text, label))
    return records


def write_tsv(records: Iterable[LabeledTweet], path, schema: TSVSchema = DEFAULT_SCHEMA) -> None:
    records = list(records)
    labeled = any(r.label is not None for r in records)
    header = [schema.id, schema.text] + ([schema.label] if labeled else [])
    rows = ["\t".join(header)]
    for r in records:
        if "\t" in r.text or "\n" in r.text:
            raise TSVFormatError(0, f"record {r.id!r} contains a tab or newline")
        row = [r.id, r.text]
        if labeled:
            row.append(LABEL_NAMES[r.label])
        rows.append("\t".join(row))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def split(data: Sequence[LabeledTweet], ratio: float = 0.9, seed: int = 42) -> DataSplit:
    """Stratified, seeded train/dev split.

    The train set holds ``round(ratio * N)`` records (half rounds up). Each
    class first receives ``floor(ratio * n_c)`` train slots; leftover slots go
    to the classes with the largest fractional remainders (ties: larger
    class, then lower label). Within a class, records are shuffled with a
    PRNG seeded by ``seed``. Both halves keep the input order.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    if not data:
        raise ValueError("cannot split an empty dataset")

    exact = Fraction(str(ratio))
    by_class: dict = {}
    for index, record in enumerate(data):
        by_class.setdefault(record.label, []).append(index)
    for label, members in by_class.items():
        if len(members) < 2:
            raise StratificationError(
                f"class {label!r} has {len(members)} member(s); stratification needs at least 2"
            )

    n_train = _round_half_up(exact * len(data))
    quotas = {c: math.floor(exact * len(m)) for c, m in by_class.items()}
    leftover = n_train - sum(quotas.values())
    order = sorted(
        by_class,
        key=lambda c: (-(exact * len(by_class[c]) - quotas[c]), -len(by_class[c]), str(c)),
    )
    for c in order[:leftover]:
        quotas[c] += 1

    rng = random.Random(seed)
    train_idx = set()
    for c in sorted(by_class, key=str):
        members = list(by_class[c])
        rng.shuffle(members)
        train_idx.update(members[: quotas[c]])

    train = tuple(r for i, r in enumerate(data) if i in train_idx)
    dev = tuple(r for i, r in enumerate(data) if i not in train_idx)
    return DataSplit(train=train, dev=dev, seed=seed, ratio=ratio)


def class_distribution(data: Iterable[LabeledTweet]) -> dict:
    counts = Counter(LABEL_NAMES[r.label] for r in data if r.label is not None)
    return {"NOT": counts.get("NOT", 0), "OFF": counts.get("OFF", 0)}


def write_split(data_split: DataSplit, out_dir, schema: TSVSchema = DEFAULT_SCHEMA) -> None:
    """Write ``train.tsv``, ``dev.tsv`` and a ``split.json`` sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_tsv(data_split.train, out_dir / "train.tsv", schema)
    write_tsv(data_split.dev, out_dir / "dev.tsv", schema)
    sidecar = {
        "seed": data_split.seed,
        "ratio": data_split.ratio,
        "counts": {
            "train": class_distribution(data_split.train),
            "dev": class_distribution(data_split.dev),
        },
    }
    (out_dir / "split.json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def render_distribution(columns: dict) -> str:
    """Format ``{column name: class counts}`` like a per-set distribution table."""
    names = list(columns)
    width = max([8] + [len(n) for n in names]) + 2
    lines = [" " * 10 + "".join(n.rjust(width) for n in names)]
    for row, key in (("Negative", "NOT"), ("Positive", "OFF")):
        lines.append(row.ljust(10) + "".join(f"{columns[n][key]:,}".rjust(width) for n in names))
    totals = "".join(f"{columns[n]['NOT'] + columns[n]['OFF']:,}".rjust(width) for n in names)
    lines.append("Total".ljust(10) + totals)
    return "\n".join(lines)
