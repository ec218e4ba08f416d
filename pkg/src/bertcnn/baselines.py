"""Comparison systems: TF-IDF + linear SVM, CNN-Text, BiLSTM and plain BERT."""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence

from .encoder import TransformerEncoder
from .errors import ConfigError, PipelineError
from .head import ConvHead, Dense, HeadConfig, _glorot_


class TrainingError(PipelineError, ValueError):
    pass


# --------------------------------------------------------------------------- TF-IDF


class TfidfVectorizer:
    """Top-k term-frequency features re-weighted by smoothed idf.

    ``idf(t) = ln((1 + N) / (1 + df(t))) + 1``; rows are L2-normalized in
    ``tfidf`` mode. ``count`` mode returns the raw counts.
    """

    def __init__(self, max_features: int = 3000, mode: str = "tfidf"):
        if mode not in ("tfidf", "count"):
            raise ConfigError(f"unknown tf mode {mode!r}")
        self.max_features = max_features
        self.mode = mode
        self.vocabulary: list = []
        self.document_frequency: list = []
        self.idf = np.zeros(0)

    def fit(self, corpus: Sequence[Sequence[str]]) -> "TfidfVectorizer":
        if not corpus:
            raise ValueError("cannot fit a vectorizer on an empty corpus")
        totals = Counter()
        df = Counter()
        for doc in corpus:
            totals.update(doc)
            df.update(set(doc))
        if self.max_features > len(totals):
            warnings.warn(
                f"only {len(totals)} distinct tokens; feature space shrinks from {self.max_features}",
                stacklevel=2,
            )
        ranked = sorted(totals, key=lambda t: (-totals[t], t))[: self.max_features]
        self.vocabulary = ranked
        self.document_frequency = [df[t] for t in ranked]
        n = len(corpus)
        self.idf = np.log((1.0 + n) / (1.0 + np.asarray(self.document_frequency, dtype=float))) + 1.0
        self._index = {t: j for j, t in enumerate(ranked)}
        return self

    def transform(self, corpus: Sequence[Sequence[str]]) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for i, doc in enumerate(corpus):
            counts = Counter(self._index[t] for t in doc if t in self._index)
            for j, c in sorted(counts.items()):
                rows.append(i)
                cols.append(j)
                vals.append(float(c))
        x = sp.csr_matrix((vals, (rows, cols)), shape=(len(corpus), len(self.vocabulary)), dtype=float)
        if self.mode == "count":
            return x
        x = x.multiply(self.idf[None, :]).tocsr()
        norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=1)).ravel())
        norms[norms == 0] = 1.0
        return sp.diags(1.0 / norms) @ x

    def fit_transform(self, corpus):
        return self.fit(corpus).transform(corpus)

    def to_dict(self) -> dict:
        return {
            "max_features": self.max_features,
            "mode": self.mode,
            "vocabulary": self.vocabulary,
            "document_frequency": self.document_frequency,
            "idf": self.idf.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TfidfVectorizer":
        vec = cls(d["max_features"], d["mode"])
        vec.vocabulary = list(d["vocabulary"])
        vec.document_frequency = list(d["document_frequency"])
        vec.idf = np.asarray(d["idf"], dtype=float)
        vec._index = {t: j for j, t in enumerate(vec.vocabulary)}
        return vec


def tfidf_featurize(corpus, k: int = 3000, mode: str = "tfidf"):
    return TfidfVectorizer(k, mode).fit_transform(corpus)


@dataclass
class LinearSVM:
    """Hinge-loss linear SVM with a regularized bias.

    Minimizes ``0.5 * (|w|^2 + b^2) + C * mean_i max(0, 1 - y_i (w.x_i + b))``
    with ``y`` in {-1, +1}, by dual coordinate descent. Averaging the hinge
    term makes the solution invariant to duplicating the training set.
    """

    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bias: float = 0.0
    C: float = 1.0

    def decision_function(self, x) -> np.ndarray:
        return np.asarray(x @ self.weights).ravel() + self.bias

    def predict(self, x) -> np.ndarray:
        return (self.decision_function(x) >= 0).astype(int)

    def predict_proba(self, x) -> np.ndarray:
        """Logistic squash of the margin; uncalibrated, but ``>= 0.5`` iff label 1."""
        return 1.0 / (1.0 + np.exp(-self.decision_function(x)))

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias, "C": self.C}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearSVM":
        return cls(np.asarray(d["weights"], dtype=float), float(d["bias"]), float(d["C"]))


def _rows(x):
    if sp.issparse(x):
        x = x.tocsr()
        return [(x.indices[x.indptr[i]:x.indptr[i + 1]], x.data[x.indptr[i]:x.indptr[i + 1]]) for i in range(x.shape[0])]
    x = np.asarray(x, dtype=float)
    idx = np.arange(x.shape[1])
    return [(idx, x[i]) for i in range(x.shape[0])]


def train_linear_svm(features, labels, C: float = 1.0, tol: float = 1e-10, max_epochs: int = 10000, seed: int = 0) -> LinearSVM:
    labels = np.asarray(labels)
    if set(np.unique(labels)) != {0, 1}:
        raise TrainingError("SVM training needs at least one example of each class")
    n, d = features.shape
    y = np.where(labels == 1, 1.0, -1.0)
    upper = C / n
    rows = _rows(features)
    qdiag = np.array([float(v @ v) + 1.0 for _, v in rows])
    alpha = np.zeros(n)
    w = np.zeros(d)
    b = 0.0
    rng = np.random.default_rng(seed)
    for _ in range(max_epochs):
        worst = 0.0
        for i in rng.permutation(n):
            idx, val = rows[i]
            grad = y[i] * (float(w[idx] @ val) + b) - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(grad, 0.0)
            elif a == upper:
                pg = max(grad, 0.0)
            else:
                pg = grad
            worst = max(worst, abs(pg))
            if pg != 0.0:
                new = min(max(a - grad / qdiag[i], 0.0), upper)
                step = (new - a) * y[i]
                w[idx] += step * val
                b += step
                alpha[i] = new
        if worst < tol:
            break
    return LinearSVM(w, b, C)


@dataclass
class TfidfModel:
    vectorizer: TfidfVectorizer
    svm: LinearSVM

    def features(self, token_lists):
        return self.vectorizer.transform(token_lists)

    def predict_proba(self, token_lists) -> np.ndarray:
        return self.svm.predict_proba(self.features(token_lists))

    def save(self, path) -> None:
        payload = {"vectorizer": self.vectorizer.to_dict(), "svm": self.svm.to_dict()}
        Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "TfidfModel":
        payload = json.loads(Path(path).read_text())
        return cls(TfidfVectorizer.from_dict(payload["vectorizer"]), LinearSVM.from_dict(payload["svm"]))


# --------------------------------------------------------------------------- neural baselines


@dataclass(frozen=True)
class SeqClassifierConfig:
    variant: str
    vocab_size: int
    embed_dim: int = 300
    hidden: int = 128
    layers: int = 2
    filter_widths: tuple = (1, 2, 3, 4, 5)
    filters_per_width: int = 32
    dropout: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "filter_widths", tuple(self.filter_widths))
        if self.variant not in ("cnn_text", "bilstm"):
            raise ConfigError(f"unknown sequence classifier variant {self.variant!r}")

    def head_config(self) -> HeadConfig:
        return HeadConfig(
            embed_dim=self.embed_dim,
            filter_widths=self.filter_widths,
            filters_per_width=self.filters_per_width,
            in_channels=1,
            dropout=self.dropout,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filter_widths"] = list(self.filter_widths)
        return d


def _random_embedding(vocab_size, dim, gen):
    emb = nn.Embedding(vocab_size, dim)
    with torch.no_grad():
        emb.weight.copy_(torch.randn(emb.weight.shape, generator=gen))
    return emb


class CNNText(nn.Module):
    """Trainable word embeddings as a single channel into the convolutional head."""

    def __init__(self, config: SeqClassifierConfig, seed: int = 0):
        super().__init__()
        self.config = config
        gen = torch.Generator().manual_seed(seed)
        self.embedding = _random_embedding(config.vocab_size, config.embed_dim, gen)
        self.head = ConvHead(config.head_config(), seed=seed + 1)

    def forward(self, ids, mask):
        return self.head(self.embedding(ids)[:, None])

    def predict_proba(self, ids, mask):
        return torch.sigmoid(self.forward(ids, mask))


class BiLSTMClassifier(nn.Module):
    """Stacked bidirectional LSTM; classifies from the top layer's final states.

    The forward direction contributes its state at the last unmasked
    position, the backward direction its state at position 0.
    """

    def __init__(self, config: SeqClassifierConfig, seed: int = 0):
        super().__init__()
        self.config = config
        gen = torch.Generator().manual_seed(seed)
        self.embedding = _random_embedding(config.vocab_size, config.embed_dim, gen)
        self.lstm = nn.LSTM(
            config.embed_dim,
            config.hidden,
            num_layers=config.layers,
            bidirectional=True,
            batch_first=True,
            dropout=config.dropout if config.layers > 1 else 0.0,
        )
        bound = 1.0 / math.sqrt(config.hidden)
        with torch.no_grad():
            for p in self.lstm.parameters():
                p.copy_((torch.rand(p.shape, generator=gen) * 2 - 1) * bound)
        self.dropout = nn.Dropout(config.dropout)
        self.dense = Dense(2 * config.hidden)
        _glorot_(self.dense.weight, 2 * config.hidden, 1, gen)

    def features(self, ids, mask):
        lengths = mask.sum(dim=1).clamp(min=1).cpu()
        packed = pack_padded_sequence(self.embedding(ids), lengths, batch_first=True, enforce_sorted=False)
        _, (h_n, _) = self.lstm(packed)
        return torch.cat([h_n[-2], h_n[-1]], dim=1)

    def forward(self, ids, mask):
        return self.dense(self.dropout(self.features(ids, mask)))

    def predict_proba(self, ids, mask):
        return torch.sigmoid(self.forward(ids, mask))


class BertClassifier(nn.Module):
    """Encoder plus a dense unit on the top layer's ``[CLS]`` vector."""

    def __init__(self, encoder: TransformerEncoder, seed: int = 0, dropout: float = 0.0):
        super().__init__()
        self.encoder = encoder
        hidden = encoder.config.hidden
        self.dropout = nn.Dropout(dropout)
        self.dense = Dense(hidden)
        _glorot_(self.dense.weight, hidden, 1, torch.Generator().manual_seed(seed))

    def forward(self, ids, mask):
        top = self.encoder.hidden_states(ids, mask)[-1]
        return self.dense(self.dropout(top[:, 0]))

    def predict_proba(self, ids, mask):
        return torch.sigmoid(self.forward(ids, mask))
