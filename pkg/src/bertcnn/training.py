"""Mini-batch training with per-epoch dev evaluation and best-macro-F1 selection."""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from .baselines import LinearSVM, TfidfModel, TfidfVectorizer, train_linear_svm
from .errors import ConfigError, NumericError
from .head import predict_label
from .metrics import EvalReport, confusion, macro_f1
from .models import Pipeline, predict_examples, tensors

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 2e-5
    batch_size: int = 32
    seed: int = 42
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    clip_norm: Optional[float] = 1.0
    warmup_ratio: float = 0.0
    svm_c: float = 1.0
    max_features: int = 3000
    tf_mode: str = "tfidf"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0 <= self.warmup_ratio < 1:
            raise ConfigError(f"warmup ratio must lie in [0, 1), got {self.warmup_ratio}")
        self.betas = tuple(self.betas)


# --------------------------------------------------------------------------- optimizer


def optimizer_step(params, grads, state: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                   weight_decay: float = 0.0) -> None:
    """In-place Adam update with bias correction and decoupled weight decay.

    ``state`` maps a parameter's position in ``params`` to its step count and
    first/second moment buffers; missing entries start from zero.
    """
    b1, b2 = betas
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if p.shape != g.shape:
            raise ValueError(f"parameter {i}: shape {tuple(p.shape)} vs gradient {tuple(g.shape)}")
        if not torch.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {i}")
        s = state.setdefault(i, {"step": 0, "m": torch.zeros_like(p), "v": torch.zeros_like(p)})
        s["step"] += 1
        s["m"].mul_(b1).add_(g, alpha=1 - b1)
        s["v"].mul_(b2).addcmul_(g, g, value=1 - b2)
        m_hat = s["m"] / (1 - b1 ** s["step"])
        v_hat = s["v"] / (1 - b2 ** s["step"])
        if weight_decay:
            p.mul_(1 - lr * weight_decay)
        p.addcdiv_(m_hat, v_hat.sqrt().add_(eps), value=-lr)


class AdamW(torch.optim.Optimizer):
    def __init__(self, params, lr=2e-5, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        super().__init__(params, dict(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay))

    @torch.no_grad()
    def step(self, closure=None):
        for group in self.param_groups:
            params = [p for p in group["params"] if p.grad is not None]
            group_state = {i: self.state[p] for i, p in enumerate(params) if self.state[p]}
            optimizer_step(params, [p.grad for p in params], group_state, group["lr"],
                           group["betas"], group["eps"], group["weight_decay"])
            for i, p in enumerate(params):
                self.state[p] = group_state[i]


def parameter_groups(module, weight_decay: float) -> list:
    """Weight decay everywhere except biases and normalization parameters."""
    decay, no_decay = [], []
    for name, p in module.named_parameters():
        if not p.requires_grad:
            continue
        owner, _, leaf = name.rpartition(".")
        if leaf.startswith("bias") or "norm" in owner.rpartition(".")[2]:
            no_decay.append(p)
        else:
            decay.append(p)
    return [
        {"params": decay, "weight_decay": weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
    ]


# --------------------------------------------------------------------------- history


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_macro_f1: float
    wall_time: float


@dataclass
class RunHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_score: float = -1.0

    def add(self, record: EpochRecord) -> bool:
        """Append a record; True when it is a new strict best (earliest argmax wins)."""
        self.epochs.append(record)
        if record.dev_macro_f1 > self.best_score:
            self.best_score = record.dev_macro_f1
            self.best_epoch = record.epoch
            return True
        return False

    @property
    def losses(self) -> list:
        return [r.train_loss for r in self.epochs]

    def to_jsonl(self) -> str:
        lines = [json.dumps(asdict(r), sort_keys=True) for r in self.epochs]
        summary = {"summary": True, "best_epoch": self.best_epoch, "best_score": self.best_score,
                   "epochs": len(self.epochs)}
        lines.append(json.dumps(summary, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "RunHistory":
        history = cls()
        for line in text.splitlines():
            d = json.loads(line)
            if d.get("summary"):
                history.best_epoch, history.best_score = d["best_epoch"], d["best_score"]
            else:
                history.epochs.append(EpochRecord(**d))
        return history


# --------------------------------------------------------------------------- loops


def evaluate(pipeline: Pipeline, records, **meta) -> EvalReport:
    records = list(records)
    probs = pipeline.predict_proba(records)
    preds = [predict_label(p) for p in probs]
    return EvalReport.from_predictions(
        preds, [r.label for r in records], model=pipeline.variant, language=pipeline.language, **meta
    )


def _dev_score(module, examples) -> float:
    probs = predict_examples(module, examples)
    preds = [predict_label(p) for p in probs]
    return macro_f1(confusion(preds, [e.label for e in examples]))


def _save_epoch(pipeline: Pipeline, run_dir: Optional[Path], epoch: int) -> None:
    if run_dir is not None:
        pipeline.save(run_dir / f"epoch-{epoch}")


def _write_best(run_dir: Path, history: RunHistory) -> None:
    pointer = {"epoch": history.best_epoch, "path": f"epoch-{history.best_epoch}", "score": history.best_score}
    (run_dir / "best").write_text(json.dumps(pointer, sort_keys=True) + "\n")
    (run_dir / "history.jsonl").write_text(history.to_jsonl())


def train(pipeline: Pipeline, data_split, config: TrainConfig, run_dir=None) -> tuple:
    """Train ``pipeline`` in place on ``data_split.train``, selecting by dev macro-F1.

    Returns ``(pipeline, history)`` with the best epoch's weights loaded.
    When ``run_dir`` is given every epoch is saved under ``epoch-<k>/`` and a
    ``best`` pointer plus ``history.jsonl`` are written at the end.
    """
    if not data_split.train:
        raise ConfigError("training set is empty")
    if not data_split.dev:
        raise ConfigError("dev set is empty; dev-set model selection needs at least one example")
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
    if pipeline.is_neural:
        history = _train_neural(pipeline, data_split, config, run_dir)
    else:
        history = _train_svm(pipeline, data_split, config, run_dir)
    if run_dir is not None:
        _write_best(run_dir, history)
    return pipeline, history


def _train_svm(pipeline: Pipeline, data_split, config: TrainConfig, run_dir) -> RunHistory:
    start = time.perf_counter()
    vectorizer = TfidfVectorizer(config.max_features, config.tf_mode)
    x = vectorizer.fit_transform(pipeline.tokens(data_split.train))
    y = np.array([r.label for r in data_split.train])
    svm = train_linear_svm(x, y, C=config.svm_c, seed=config.seed)
    pipeline.tfidf = TfidfModel(vectorizer, svm)
    margins = 1 - np.where(y == 1, 1.0, -1.0) * svm.decision_function(x)
    hinge = float(np.maximum(margins, 0).mean())
    score = evaluate(pipeline, data_split.dev).macro_f1
    history = RunHistory()
    history.add(EpochRecord(0, hinge, score, time.perf_counter() - start))
    _save_epoch(pipeline, run_dir, 0)
    return history


def _train_neural(pipeline: Pipeline, data_split, config: TrainConfig, run_dir) -> RunHistory:
    module = pipeline.module
    torch.manual_seed(config.seed)  # dropout masks
    gen = torch.Generator().manual_seed(config.seed)

    train_examples = pipeline.examples(data_split.train)
    dev_examples = pipeline.examples(data_split.dev)
    ids, mask = tensors(train_examples)
    labels = torch.tensor([e.label for e in train_examples], dtype=torch.float32)

    optimizer = AdamW(parameter_groups(module, config.weight_decay), lr=config.learning_rate,
                      betas=config.betas, eps=config.eps)
    n = len(train_examples)
    steps_per_epoch = math.ceil(n / config.batch_size)
    warmup_steps = int(config.warmup_ratio * steps_per_epoch * config.epochs)
    step = 0

    history = RunHistory()
    best_state = None
    for epoch in range(config.epochs):
        start = time.perf_counter()
        module.train()
        order = torch.randperm(n, generator=gen)
        total = 0.0
        for b, lo in enumerate(range(0, n, config.batch_size)):
            idx = order[lo:lo + config.batch_size]
            step += 1
            if warmup_steps:
                scale = min(1.0, step / warmup_steps)
                for group in optimizer.param_groups:
                    group["lr"] = config.learning_rate * scale
            try:
                logits = module(ids[idx], mask[idx])
            except NumericError as err:
                raise NumericError(f"{err} at epoch {epoch}, batch {b}") from err
            target = labels[idx].to(logits.dtype)
            loss = F.binary_cross_entropy_with_logits(logits, target)
            if not torch.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            optimizer.zero_grad()
            loss.backward()
            if config.clip_norm:
                torch.nn.utils.clip_grad_norm_(module.parameters(), config.clip_norm)
            optimizer.step()
            total += loss.item() * len(idx)
        score = _dev_score(module, dev_examples)
        record = EpochRecord(epoch, total / n, score, time.perf_counter() - start)
        log.info("epoch %d  loss %.6f  dev macro-F1 %.4f", epoch, record.train_loss, score)
        if history.add(record):
            best_state = copy.deepcopy(module.state_dict())
        _save_epoch(pipeline, run_dir, epoch)

    module.load_state_dict(best_state)
    module.eval()
    return history
