"""Binary confusion counts and macro-averaged F1 (positive class = offensive)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self) -> "Confusion":
        """The same counts with the positive and negative classes exchanged."""
        return Confusion(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)


def confusion(preds: Sequence[int], golds: Sequence[int]) -> Confusion:
    preds, golds = list(preds), list(golds)
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} gold labels")
    tp = fp = fn = tn = 0
    for p, g in zip(preds, golds):
        if p not in (0, 1) or g not in (0, 1):
            raise ValueError(f"labels must be 0 or 1, got prediction {p!r} / gold {g!r}")
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return Confusion(tp, fp, fn, tn)


def _prf(tp: int, fp: int, fn: int) -> tuple:
    # 0/0 precision or recall counts as 0; so does F1 when P + R = 0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def per_class(counts: Confusion) -> dict:
    out = {}
    for name, (tp, fp, fn) in {
        "OFF": (counts.tp, counts.fp, counts.fn),
        "NOT": (counts.tn, counts.fn, counts.fp),
    }.items():
        p, r, f = _prf(tp, fp, fn)
        out[name] = {"precision": p, "recall": r, "f1": f}
    return out


def macro_f1(counts: Confusion) -> float:
    classes = per_class(counts)
    return (classes["OFF"]["f1"] + classes["NOT"]["f1"]) / 2


@dataclass
class EvalReport:
    confusion: Confusion
    per_class: dict
    macro_f1: float
    n: int
    model: str = ""
    language: str = ""
    dataset: str = ""
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, preds, golds, **meta) -> "EvalReport":
        counts = confusion(preds, golds)
        return cls(counts, per_class(counts), macro_f1(counts), counts.n, **meta)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confusion"] = asdict(self.confusion)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["confusion"] = Confusion(**d["confusion"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())


DISPLAY_NAMES = {
    "svm_tfidf": "SVM with TF-IDF",
    "bert": "BERT",
    "bilstm": "Bi-LSTM",
    "cnn_text": "CNN-Text",
    "bert_cnn": "BERT-CNN",
}
LANGUAGE_NAMES = {"ar": "Arabic", "el": "Greek", "tr": "Turkish"}


def render_table(reports: Sequence[EvalReport]) -> str:
    """Model-by-language macro-F1 grid with an Average column, 3 decimals."""
    languages = [l for l in LANGUAGE_NAMES if any(r.language == l for r in reports)]
    languages += sorted({r.language for r in reports} - set(languages))
    models = []
    for r in reports:
        if r.model not in models:
            models.append(r.model)
    cells = {(r.model, r.language): r.macro_f1 for r in reports}

    header = ["Model"] + [LANGUAGE_NAMES.get(l, l or "-") for l in languages] + ["Average"]
    body = []
    for m in models:
        scores = [cells.get((m, l)) for l in languages]
        present = [s for s in scores if s is not None]
        avg = sum(present) / len(present) if present else None
        row = [DISPLAY_NAMES.get(m, m or "-")] + [f"{s:.3f}" if s is not None else "-" for s in scores]
        row.append(f"{avg:.3f}" if avg is not None else "-")
        body.append(row)
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = []
    for row in [header] + body:
        lines.append("  ".join([row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]))
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"
