"""Character-level CNN that reads a report's text and predicts its anchor labels.

Used to judge generated reports: if the text truly expresses a finding, a
classifier trained on gold reports should recover the label from the words
alone (negations flip it, which is the point).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .anchors import anchor_vocabulary
from .errors import CorpusError, FormatError, TrainingError
from .metrics import multilabel_accuracy, multilabel_pr_auc
from .nn import Adam, load_tensors, save_tensors
from .nn.ops import sigmoid

ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789 .,;:()"
OTHER_ID = len(ALPHABET)
ALPHABET_SIZE = len(ALPHABET) + 1
_CHAR_TO_ID = {ch: i for i, ch in enumerate(ALPHABET)}
SPACE_ID = _CHAR_TO_ID[" "]


def encode_chars(text: str, max_len: int) -> np.ndarray:
    """Map text to char ids, space-padded to max_len; warns when truncating."""
    lowered = text.lower()
    if len(lowered) > max_len:
        warnings.warn(
            f"text of {len(lowered)} chars truncated to {max_len}", stacklevel=2
        )
        lowered = lowered[:max_len]
    ids = np.full(max_len, SPACE_ID, dtype=np.int64)
    for i, ch in enumerate(lowered):
        ids[i] = _CHAR_TO_ID.get(ch, OTHER_ID)
    return ids


@dataclass
class PhenotypeClassifier:
    modality: str
    width: int
    max_len: int
    conv_w: np.ndarray  # (filters, alphabet, width)
    conv_b: np.ndarray  # (filters,)
    out_w: np.ndarray  # (filters, n_labels)
    out_b: np.ndarray  # (n_labels,)
    loss_history: list[float] = field(default_factory=list)

    @property
    def labels(self) -> tuple[str, ...]:
        return anchor_vocabulary(self.modality)

    @classmethod
    def init(cls, modality: str, filters: int = 48, width: int = 9,
             max_len: int = 512, seed: int = 0) -> "PhenotypeClassifier":
        if max_len < width:
            raise CorpusError("max_len must be at least the filter width")
        labels = anchor_vocabulary(modality)
        rng = np.random.default_rng(seed)
        return cls(
            modality=modality,
            width=width,
            max_len=max_len,
            conv_w=rng.standard_normal((filters, ALPHABET_SIZE, width)) / np.sqrt(width),
            conv_b=np.zeros(filters),
            out_w=rng.standard_normal((filters, len(labels))) / np.sqrt(filters),
            out_b=np.zeros(len(labels)),
        )

    def save(self, path: str | Path) -> None:
        from .encoder import MODALITY_CODES

        save_tensors(
            path,
            {
                "meta": np.array(
                    [MODALITY_CODES[self.modality], self.width, self.max_len],
                    dtype=np.float64,
                ),
                "conv_w": self.conv_w,
                "conv_b": self.conv_b,
                "out_w": self.out_w,
                "out_b": self.out_b,
            },
        )

    @classmethod
    def load(cls, path: str | Path) -> "PhenotypeClassifier":
        from .encoder import MODALITY_NAMES

        raw = load_tensors(path)
        try:
            return cls(
                modality=MODALITY_NAMES[int(raw["meta"][0])],
                width=int(raw["meta"][1]),
                max_len=int(raw["meta"][2]),
                conv_w=raw["conv_w"],
                conv_b=raw["conv_b"],
                out_w=raw["out_w"],
                out_b=raw["out_b"],
            )
        except KeyError as exc:
            raise FormatError(f"{path}: missing phenotype tensor {exc}") from None


def _forward(clf: PhenotypeClassifier, chars: np.ndarray):
    """chars (B, Lc) int -> logits (B, n_labels) with caches for backward."""
    batch, length = chars.shape
    out_len = length - clf.width + 1
    filters = clf.conv_w.shape[0]
    y = np.zeros((batch, filters, out_len))
    for j in range(clf.width):
        y += clf.conv_w[:, chars[:, j : j + out_len], j].transpose(1, 0, 2)
    y += clf.conv_b[None, :, None]
    mask = y > 0
    activated = y * mask
    arg = activated.argmax(axis=2)
    pooled = np.take_along_axis(activated, arg[:, :, None], axis=2)[:, :, 0]
    logits = pooled @ clf.out_w + clf.out_b
    return logits, (chars, mask, arg, pooled, out_len)


def _loss_and_grads(clf: PhenotypeClassifier, params: dict[str, np.ndarray],
                    chars: np.ndarray, targets: np.ndarray):
    work = PhenotypeClassifier(
        modality=clf.modality, width=clf.width, max_len=clf.max_len,
        conv_w=params["conv_w"], conv_b=params["conv_b"],
        out_w=params["out_w"], out_b=params["out_b"],
    )
    logits, (chars, mask, arg, pooled, out_len) = _forward(work, chars)
    probs = sigmoid(logits)
    eps = 1e-12
    loss = -float(
        np.mean(targets * np.log(probs + eps) + (1 - targets) * np.log(1 - probs + eps))
    )
    dlogits = (probs - targets) / targets.size

    grads = {
        "out_w": pooled.T @ dlogits,
        "out_b": dlogits.sum(axis=0),
        "conv_b": np.zeros_like(params["conv_b"]),
        "conv_w": np.zeros_like(params["conv_w"]),
    }
    dpooled = dlogits @ params["out_w"].T  # (B, F)
    dact = np.zeros(mask.shape)
    np.put_along_axis(dact, arg[:, :, None], dpooled[:, :, None], axis=2)
    dact *= mask
    grads["conv_b"] += dact.sum(axis=(0, 2))
    filters = params["conv_w"].shape[0]
    flat_d = dact.transpose(1, 0, 2).reshape(filters, -1)  # (F, B*out_len)
    for j in range(clf.width):
        window_chars = chars[:, j : j + out_len].reshape(-1)
        for f in range(filters):
            grads["conv_w"][f, :, j] += np.bincount(
                window_chars, weights=flat_d[f], minlength=ALPHABET_SIZE
            )
    return loss, grads


def predict_probabilities(clf: PhenotypeClassifier, texts) -> np.ndarray:
    chars = np.stack([encode_chars(t, clf.max_len) for t in texts])
    logits, _ = _forward(clf, chars)
    return sigmoid(logits)


@dataclass
class PhenotypeTrainConfig:
    epochs: int = 8
    lr: float = 2e-3
    batch_size: int = 64
    seed: int = 0


def train_phenotype(texts, label_sets, modality: str,
                    config: PhenotypeTrainConfig | None = None,
                    clf: PhenotypeClassifier | None = None) -> PhenotypeClassifier:
    """Fit the char CNN on (report text, anchor labels) with Adam + BCE."""
    config = config or PhenotypeTrainConfig()
    clf = clf or PhenotypeClassifier.init(modality, seed=config.seed)
    labels = clf.labels
    index = {label: j for j, label in enumerate(labels)}
    chars = np.stack([encode_chars(t, clf.max_len) for t in texts])
    targets = np.zeros((len(texts), len(labels)))
    for i, row in enumerate(label_sets):
        for label in row:
            targets[i, index[label]] = 1.0

    params = {"conv_w": clf.conv_w, "conv_b": clf.conv_b,
              "out_w": clf.out_w, "out_b": clf.out_b}
    opt = Adam(params, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    n = len(texts)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, config.batch_size):
            take = order[start : start + config.batch_size]
            loss, grads = _loss_and_grads(clf, params, chars[take], targets[take])
            if not np.isfinite(loss):
                raise TrainingError(f"phenotype loss became non-finite in epoch {epoch}")
            opt.step(params, grads)
            total += loss * take.size
            seen += take.size
        clf.loss_history.append(total / seen)
    clf.conv_w, clf.conv_b = params["conv_w"], params["conv_b"]
    clf.out_w, clf.out_b = params["out_w"], params["out_b"]
    return clf


def phenotype_eval(clf: PhenotypeClassifier, texts, gold_label_sets) -> tuple[float, float]:
    """Score generated texts against gold labels: (mean accuracy, mean PR-AUC)."""
    if len(texts) != len(gold_label_sets):
        raise CorpusError("texts and gold labels must align")
    index = {label: j for j, label in enumerate(clf.labels)}
    gold = np.zeros((len(texts), len(clf.labels)), dtype=np.int64)
    for i, row in enumerate(gold_label_sets):
        for label in row:
            gold[i, index[label]] = 1
    probs = predict_probabilities(clf, texts)
    return multilabel_accuracy(probs, gold), multilabel_pr_auc(probs, gold)


def phenotype_gradient_check(clf: PhenotypeClassifier, texts, label_sets,
                             tolerance: float | None = None, **kwargs) -> float:
    from .nn import gradient_check

    index = {label: j for j, label in enumerate(clf.labels)}
    chars = np.stack([encode_chars(t, clf.max_len) for t in texts])
    targets = np.zeros((len(texts), len(clf.labels)))
    for i, row in enumerate(label_sets):
        for label in row:
            targets[i, index[label]] = 1.0

    def fn(params):
        return _loss_and_grads(clf, params, chars, targets)

    params = {"conv_w": clf.conv_w, "conv_b": clf.conv_b,
              "out_w": clf.out_w, "out_b": clf.out_b}
    return gradient_check(fn, params, tolerance=tolerance, **kwargs)
