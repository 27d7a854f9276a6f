"""Signal encoders: recording file I/O, the convolutional embedding network,
and the linear anchor-word classifier that sits on top of embeddings.

The network maps one epoch (channels x time) to a fixed-size embedding:
temporal conv -> norm -> depthwise across channels -> norm -> relu ->
avgpool/4 -> dropout -> separable temporal conv -> norm -> relu ->
avgpool/8 -> dropout -> dense. Recordings with several epochs are encoded
per epoch and averaged. Dropout is identity here: only inference and
gradient verification run through this stack, no fitting loop.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .anchors import anchor_vocabulary
from .errors import FormatError, ShapeMismatchError, TrainingError
from .nn import Adam, load_tensors, save_tensors
from .nn import ops

MAGIC = b"CLRA"
VERSION = 1
MODALITY_CODES = {"xray": 0, "eeg": 1}
MODALITY_NAMES = {v: k for k, v in MODALITY_CODES.items()}

DEFAULT_EMBED_DIM = 512


@dataclass
class RecordingInput:
    """Raw signal: data shaped (epochs, channels, time); xray uses one epoch."""

    modality: str
    data: np.ndarray
    sample_rate: int = 0

    def __post_init__(self) -> None:
        if self.data.ndim == 2:
            self.data = self.data[None, :, :]
        if self.data.ndim != 3:
            raise ShapeMismatchError(
                f"recording data must be 2-D or 3-D, got {self.data.ndim}-D"
            )
        if not np.all(np.isfinite(self.data)):
            raise FormatError("recording contains non-finite samples")


def write_recording(rec: RecordingInput, path: str | Path) -> None:
    epochs, channels, time = rec.data.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(
            struct.pack(
                "<BBIIII",
                VERSION,
                MODALITY_CODES[rec.modality],
                channels,
                time,
                epochs,
                rec.sample_rate,
            )
        )
        fh.write(np.ascontiguousarray(rec.data, dtype="<f4").tobytes())


def read_recording(path: str | Path) -> RecordingInput:
    with open(path, "rb") as fh:
        header = fh.read(4 + 2 + 16)
        if len(header) < 22 or header[:4] != MAGIC:
            raise FormatError(f"{path}: not a recording file (bad magic)")
        version, modality_code, channels, time, epochs, sample_rate = struct.unpack(
            "<BBIIII", header[4:]
        )
        if version != VERSION:
            raise FormatError(f"{path}: unsupported recording version {version}")
        if modality_code not in MODALITY_NAMES:
            raise FormatError(f"{path}: unknown modality code {modality_code}")
        expected = epochs * channels * time
        raw = fh.read(4 * expected)
        if len(raw) != 4 * expected:
            raise FormatError(f"{path}: truncated sample data")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after sample data")
    data = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    data = data.reshape(epochs, channels, time)
    return RecordingInput(
        modality=MODALITY_NAMES[modality_code], data=data, sample_rate=sample_rate
    )


def chunk_epochs(signal: np.ndarray, sample_rate: int, epoch_seconds: int = 60) -> np.ndarray:
    """Cut a long (channels, time) signal into fixed epochs, dropping the tail."""
    if signal.ndim != 2:
        raise ShapeMismatchError("chunk_epochs expects a 2-D (channels, time) array")
    span = sample_rate * epoch_seconds
    if span <= 0:
        raise ShapeMismatchError("sample_rate and epoch_seconds must be positive")
    n = signal.shape[1] // span
    if n == 0:
        raise ShapeMismatchError(
            f"signal of {signal.shape[1]} samples is shorter than one epoch ({span})"
        )
    return signal[:, : n * span].reshape(signal.shape[0], n, span).transpose(1, 0, 2)


@dataclass
class EncoderParams:
    """Trainable tensors, batch-norm buffers, and the geometry they imply."""

    channels: int
    time: int
    embed_dim: int = DEFAULT_EMBED_DIM
    temporal_filters: int = 8
    temporal_kernel: int = 64
    depth_mult: int = 2
    sep_filters: int = 16
    sep_kernel: int = 16
    pool1: int = 4
    pool2: int = 8
    dropout: float = 0.5
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def mixed_channels(self) -> int:
        return self.temporal_filters * self.depth_mult

    @property
    def pooled1(self) -> int:
        return self.time // self.pool1

    @property
    def pooled2(self) -> int:
        return self.pooled1 // self.pool2

    @property
    def flat_dim(self) -> int:
        return self.sep_filters * self.pooled2

    @classmethod
    def init(cls, channels: int, time: int, embed_dim: int = DEFAULT_EMBED_DIM,
             seed: int = 0, **kwargs) -> "EncoderParams":
        p = cls(channels=channels, time=time, embed_dim=embed_dim, **kwargs)
        if p.pooled2 == 0:
            raise ShapeMismatchError(
                f"time axis {time} too short for pooling {p.pool1}*{p.pool2}"
            )
        rng = np.random.default_rng(seed)
        f1, k, m, g = p.temporal_filters, p.temporal_kernel, p.depth_mult, p.mixed_channels
        f2, ks = p.sep_filters, p.sep_kernel

        def w(*shape, fan):
            return rng.standard_normal(shape) / np.sqrt(fan)

        p.tensors = {
            "conv_w": w(f1, k, fan=k),
            "conv_b": np.zeros(f1),
            "dw_w": w(f1, m, channels, fan=channels),
            "dw_b": np.zeros((f1, m)),
            "bn1_gamma": np.ones(f1), "bn1_beta": np.zeros(f1),
            "bn2_gamma": np.ones(g), "bn2_beta": np.zeros(g),
            "sep_dw": w(g, ks, fan=ks),
            "sep_pw": w(f2, g, fan=g),
            "sep_pw_b": np.zeros(f2),
            "bn3_gamma": np.ones(f2), "bn3_beta": np.zeros(f2),
            "dense_w": w(embed_dim, p.flat_dim, fan=p.flat_dim),
            "dense_b": np.zeros(embed_dim),
        }
        p.buffers = {
            "bn1_mean": np.zeros(f1), "bn1_var": np.ones(f1),
            "bn2_mean": np.zeros(g), "bn2_var": np.ones(g),
            "bn3_mean": np.zeros(f2), "bn3_var": np.ones(f2),
        }
        return p

    def save(self, path: str | Path) -> None:
        meta = np.array(
            [self.channels, self.time, self.embed_dim, self.temporal_filters,
             self.temporal_kernel, self.depth_mult, self.sep_filters,
             self.sep_kernel, self.pool1, self.pool2],
            dtype=np.float64,
        )
        out = {"meta": meta, "dropout": np.array([self.dropout])}
        out.update({f"t.{k}": v for k, v in self.tensors.items()})
        out.update({f"b.{k}": v for k, v in self.buffers.items()})
        save_tensors(path, out)

    @classmethod
    def load(cls, path: str | Path) -> "EncoderParams":
        raw = load_tensors(path)
        if "meta" not in raw:
            raise FormatError(f"{path}: missing encoder meta tensor")
        meta = [int(x) for x in raw["meta"]]
        p = cls(
            channels=meta[0], time=meta[1], embed_dim=meta[2], temporal_filters=meta[3],
            temporal_kernel=meta[4], depth_mult=meta[5], sep_filters=meta[6],
            sep_kernel=meta[7], pool1=meta[8], pool2=meta[9],
            dropout=float(raw.get("dropout", np.array([0.5]))[0]),
        )
        p.tensors = {k[2:]: v for k, v in raw.items() if k.startswith("t.")}
        p.buffers = {k[2:]: v for k, v in raw.items() if k.startswith("b.")}
        return p


def _forward_epoch(x: np.ndarray, p: EncoderParams):
    t = p.tensors
    b = p.buffers
    caches = {}
    a, caches["conv"] = ops.conv_time(x, t["conv_w"], t["conv_b"])
    a, caches["bn1"] = ops.batchnorm_infer(a, t["bn1_gamma"], t["bn1_beta"], b["bn1_mean"], b["bn1_var"])
    a, caches["dw"] = ops.depthwise_channels(a, t["dw_w"], t["dw_b"])
    a, caches["bn2"] = ops.batchnorm_infer(a, t["bn2_gamma"], t["bn2_beta"], b["bn2_mean"], b["bn2_var"])
    a, caches["relu1"] = ops.relu(a)
    a, caches["pool1"] = ops.avgpool_time(a, p.pool1)
    # dropout: identity at inference
    a, caches["sep_dw"] = ops.depthwise_time(a, t["sep_dw"])
    a, caches["sep_pw"] = ops.pointwise(a, t["sep_pw"], t["sep_pw_b"])
    a, caches["bn3"] = ops.batchnorm_infer(a, t["bn3_gamma"], t["bn3_beta"], b["bn3_mean"], b["bn3_var"])
    a, caches["relu2"] = ops.relu(a)
    a, caches["pool2"] = ops.avgpool_time(a, p.pool2)
    flat = a.reshape(-1)
    caches["flat_shape"] = a.shape
    out, caches["dense"] = ops.dense(flat, t["dense_w"], t["dense_b"])
    return out, caches


def _backward_epoch(d_out: np.ndarray, caches, p: EncoderParams) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {}
    d_flat, grads["dense_w"], grads["dense_b"] = ops.dense_backward(d_out, caches["dense"])
    da = d_flat.reshape(caches["flat_shape"])
    da = ops.avgpool_time_backward(da, caches["pool2"])
    da = ops.relu_backward(da, caches["relu2"])
    da, grads["bn3_gamma"], grads["bn3_beta"] = ops.batchnorm_infer_backward(da, caches["bn3"])
    da, grads["sep_pw"], grads["sep_pw_b"] = ops.pointwise_backward(da, caches["sep_pw"])
    da, grads["sep_dw"] = ops.depthwise_time_backward(da, caches["sep_dw"])
    da = ops.avgpool_time_backward(da, caches["pool1"])
    da = ops.relu_backward(da, caches["relu1"])
    da, grads["bn2_gamma"], grads["bn2_beta"] = ops.batchnorm_infer_backward(da, caches["bn2"])
    da, grads["dw_w"], grads["dw_b"] = ops.depthwise_channels_backward(da, caches["dw"])
    da, grads["bn1_gamma"], grads["bn1_beta"] = ops.batchnorm_infer_backward(da, caches["bn1"])
    _, grads["conv_w"], grads["conv_b"] = ops.conv_time_backward(da, caches["conv"])
    return grads


def encode_epoch(epoch: np.ndarray, params: EncoderParams) -> np.ndarray:
    """Embed one (channels, time) epoch; the shape must match the parameters."""
    expected = (params.channels, params.time)
    if epoch.shape != expected:
        raise ShapeMismatchError(f"epoch shape {epoch.shape} does not match expected {expected}")
    out, _ = _forward_epoch(np.asarray(epoch, dtype=np.float64), params)
    return out


def encode_recording(rec: RecordingInput, params: EncoderParams) -> np.ndarray:
    """Average of per-epoch embeddings; a single epoch is returned as is."""
    vectors = [encode_epoch(ep, params) for ep in rec.data]
    return np.mean(vectors, axis=0)


def encoder_loss_and_grads(params: EncoderParams, epoch: np.ndarray, target: np.ndarray):
    """Squared-error probe used for gradient verification."""
    out, caches = _forward_epoch(np.asarray(epoch, dtype=np.float64), params)
    diff = out - target
    loss = 0.5 * float(diff @ diff)
    grads = _backward_epoch(diff, caches, params)
    return loss, grads


def encoder_gradient_check(params: EncoderParams, epoch: np.ndarray, target: np.ndarray,
                           tolerance: float | None = None, **kwargs) -> float:
    from .nn import gradient_check

    def fn(tensors):
        params.tensors = tensors
        return encoder_loss_and_grads(params, epoch, target)

    return gradient_check(fn, params.tensors, tolerance=tolerance, **kwargs)


@dataclass
class AnchorClassifier:
    """Linear multi-label head over embeddings: sigmoid(W.T f + b) per anchor."""

    modality: str
    weight: np.ndarray  # (embed_dim, n_labels)
    bias: np.ndarray  # (n_labels,)
    tau: np.ndarray  # per-label decision threshold
    loss_history: list[float] = field(default_factory=list)

    @property
    def labels(self) -> tuple[str, ...]:
        return anchor_vocabulary(self.modality)

    @classmethod
    def init(cls, modality: str, embed_dim: int, seed: int = 0, tau: float = 0.5):
        labels = anchor_vocabulary(modality)
        rng = np.random.default_rng(seed)
        return cls(
            modality=modality,
            weight=rng.standard_normal((embed_dim, len(labels))) / np.sqrt(embed_dim),
            bias=np.zeros(len(labels)),
            tau=np.full(len(labels), tau),
        )

    def probabilities(self, embedding: np.ndarray) -> np.ndarray:
        if embedding.shape != (self.weight.shape[0],):
            raise ShapeMismatchError(
                f"embedding shape {embedding.shape} does not match ({self.weight.shape[0]},)"
            )
        return ops.sigmoid(embedding @ self.weight + self.bias)

    def save(self, path: str | Path) -> None:
        save_tensors(
            path,
            {
                "meta": np.array([MODALITY_CODES[self.modality]], dtype=np.float64),
                "weight": self.weight,
                "bias": self.bias,
                "tau": self.tau,
            },
        )

    @classmethod
    def load(cls, path: str | Path) -> "AnchorClassifier":
        raw = load_tensors(path)
        try:
            modality = MODALITY_NAMES[int(raw["meta"][0])]
            return cls(modality=modality, weight=raw["weight"], bias=raw["bias"], tau=raw["tau"])
        except KeyError as exc:
            raise FormatError(f"{path}: missing classifier tensor {exc}") from None


def predict_anchor_words(embedding: np.ndarray, clf: AnchorClassifier) -> list[str]:
    """Labels whose probability clears the threshold; top-1 fallback otherwise."""
    probs = clf.probabilities(embedding)
    chosen = [label for label, p, t in zip(clf.labels, probs, clf.tau) if p >= t]
    if not chosen:
        chosen = [clf.labels[int(np.argmax(probs))]]
    return chosen


def _bce_loss_and_grads(weight, bias, feats, targets):
    logits = feats @ weight + bias
    probs = ops.sigmoid(logits)
    eps = 1e-12
    loss = -np.mean(targets * np.log(probs + eps) + (1 - targets) * np.log(1 - probs + eps))
    dlogits = (probs - targets) / targets.size
    return loss, feats.T @ dlogits, dlogits.sum(axis=0)


@dataclass
class ClassifierTrainConfig:
    epochs: int = 40
    lr: float = 1e-3
    batch_size: int = 128
    seed: int = 0


def train_anchor_classifier(
    embeddings: np.ndarray,
    label_sets,
    modality: str,
    config: ClassifierTrainConfig | None = None,
) -> AnchorClassifier:
    """Fit the linear head with Adam on binary cross-entropy.

    label_sets is a sequence of anchor-label collections, one per embedding row.
    """
    config = config or ClassifierTrainConfig()
    feats = np.asarray(embeddings, dtype=np.float64)
    labels = anchor_vocabulary(modality)
    index = {label: j for j, label in enumerate(labels)}
    targets = np.zeros((feats.shape[0], len(labels)))
    for i, row in enumerate(label_sets):
        for label in row:
            targets[i, index[label]] = 1.0

    clf = AnchorClassifier.init(modality, feats.shape[1], seed=config.seed)
    params = {"weight": clf.weight, "bias": clf.bias}
    opt = Adam(params, lr=config.lr)
    n = feats.shape[0]
    rng = np.random.default_rng(config.seed)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, config.batch_size):
            take = order[start : start + config.batch_size]
            loss, dw, db = _bce_loss_and_grads(params["weight"], params["bias"], feats[take], targets[take])
            if not np.isfinite(loss):
                raise TrainingError(f"classifier loss became non-finite in epoch {epoch}")
            opt.step(params, {"weight": dw, "bias": db})
            total += loss * take.size
            seen += take.size
        clf.loss_history.append(total / seen)
    clf.weight, clf.bias = params["weight"], params["bias"]
    return clf


def classifier_gradient_check(clf: AnchorClassifier, feats, targets,
                              tolerance: float | None = None, **kwargs) -> float:
    from .nn import gradient_check

    feats = np.asarray(feats, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)

    def fn(params):
        loss, dw, db = _bce_loss_and_grads(params["weight"], params["bias"], feats, targets)
        return loss, {"weight": dw, "bias": db}

    return gradient_check(fn, {"weight": clf.weight, "bias": clf.bias},
                          tolerance=tolerance, **kwargs)
