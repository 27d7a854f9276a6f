"""Corpus-level text metrics (BLEU, CIDEr), ranking metrics, and eval file I/O."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorpusError

MAX_NGRAM = 4
CIDER_SCALE = 10.0 / MAX_NGRAM


@dataclass(frozen=True)
class EvalPair:
    """One candidate with its reference set, already tokenized."""

    candidate: tuple[str, ...]
    references: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        if not self.references:
            raise CorpusError("an eval pair needs at least one reference")


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(pairs: Sequence[EvalPair], max_n: int = MAX_NGRAM,
         sentence_averaged: bool = False) -> float:
    """Corpus BLEU with clipped precision and the short-candidate penalty.

    The reference length is the closest to the candidate per pair, ties to the
    shorter. The default pools counts over the corpus; sentence_averaged
    instead averages per-pair scores (kept for comparison, not the headline
    number).
    """
    if not pairs:
        raise CorpusError("bleu needs at least one pair")
    if sentence_averaged:
        return float(np.mean([bleu([p], max_n=max_n) for p in pairs]))

    matched = [0] * max_n
    possible = [0] * max_n
    cand_len = 0
    ref_len = 0
    for pair in pairs:
        c = len(pair.candidate)
        cand_len += c
        ref_len += min(
            (len(r) for r in pair.references),
            key=lambda rl: (abs(rl - c), rl),
        )
        for n in range(1, max_n + 1):
            counts = ngram_counts(pair.candidate, n)
            if not counts:
                continue
            clip: Counter = Counter()
            for ref in pair.references:
                ref_counts = ngram_counts(ref, n)
                for gram in counts:
                    clip[gram] = max(clip[gram], ref_counts.get(gram, 0))
            matched[n - 1] += sum(min(counts[g], clip[g]) for g in counts)
            possible[n - 1] += max(0, c - n + 1)

    log_precision = 0.0
    for n in range(max_n):
        if matched[n] == 0 or possible[n] == 0:
            return 0.0
        log_precision += math.log(matched[n] / possible[n]) / max_n
    brevity = min(1.0, math.exp(1.0 - ref_len / cand_len)) if cand_len > 0 else 0.0
    return brevity * math.exp(log_precision)


def _tf_vector(tokens: Sequence[str], n: int) -> dict[tuple, float]:
    counts = ngram_counts(tokens, n)
    total = sum(counts.values())
    if total == 0:
        return {}
    return {gram: c / total for gram, c in counts.items()}


def cider(pairs: Sequence[EvalPair]) -> float:
    """Mean consensus score: cosine between tf-idf n-gram vectors, n = 1..4.

    Per pair and order n, the candidate vector is compared against the mean
    of the reference vectors; the four cosines are summed and scaled so a
    perfect single-reference match scores 10. Document frequency counts the
    pairs whose reference set contains the n-gram, so the score is invariant
    under duplicating the corpus.
    """
    if not pairs:
        raise CorpusError("cider needs at least one pair")
    n_docs = len(pairs)
    doc_freq: list[Counter] = [Counter() for _ in range(MAX_NGRAM)]
    for pair in pairs:
        for n in range(1, MAX_NGRAM + 1):
            seen: set = set()
            for ref in pair.references:
                seen.update(ngram_counts(ref, n))
            for gram in seen:
                doc_freq[n - 1][gram] += 1

    def idf(n: int, gram) -> float:
        return 1.0 + math.log(n_docs / max(doc_freq[n - 1].get(gram, 0), 1))

    total = 0.0
    for pair in pairs:
        pair_score = 0.0
        for n in range(1, MAX_NGRAM + 1):
            cand = {g: tf * idf(n, g) for g, tf in _tf_vector(pair.candidate, n).items()}
            mean_ref: dict[tuple, float] = {}
            for ref in pair.references:
                for g, tf in _tf_vector(ref, n).items():
                    mean_ref[g] = mean_ref.get(g, 0.0) + tf * idf(n, g)
            for g in mean_ref:
                mean_ref[g] /= len(pair.references)
            dot = sum(w * mean_ref.get(g, 0.0) for g, w in cand.items())
            norm_c = math.sqrt(sum(w * w for w in cand.values()))
            norm_r = math.sqrt(sum(w * w for w in mean_ref.values()))
            if norm_c > 0 and norm_r > 0:
                pair_score += dot / (norm_c * norm_r)
        total += CIDER_SCALE * pair_score
    return total / n_docs


def pr_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Average precision: sum over descending score thresholds of dR * P.

    Tied scores move as one group. Returns nan when there are no positives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise CorpusError("scores and labels must align")
    positives = int(labels.sum())
    if positives == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    auc = 0.0
    tp = 0
    seen = 0
    prev_recall = 0.0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        tp += int(sorted_labels[i:j].sum())
        seen += j - i
        recall = tp / positives
        precision = tp / seen
        auc += (recall - prev_recall) * precision
        prev_recall = recall
        i = j
    return float(auc)


def multilabel_accuracy(probs: np.ndarray, gold: np.ndarray, tau: float = 0.5) -> float:
    """Mean over labels of per-label accuracy at a fixed probability cut."""
    predictions = (probs >= tau).astype(np.int64)
    return float((predictions == gold).mean(axis=0).mean())


def multilabel_pr_auc(probs: np.ndarray, gold: np.ndarray) -> float:
    """Mean average precision over labels that have at least one positive."""
    values = []
    for j in range(gold.shape[1]):
        if gold[:, j].sum() == 0:
            continue
        values.append(pr_auc(probs[:, j], gold[:, j]))
    if not values:
        return float("nan")
    return float(np.mean(values))


# ------------------------------------------------------------------ files ---


def load_eval_pairs(path: str | Path):
    """Read eval JSONL: per line a candidate, references, and gold anchors."""
    pairs: list[EvalPair] = []
    gold_anchors: list[list[str]] = []
    ids: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {n}: invalid JSON ({exc.msg})") from None
            for name in ("id", "candidate", "references"):
                if name not in obj:
                    raise CorpusError(f"{path}: line {n}: missing field {name!r}")
            from .corpus import tokenize

            refs = tuple(tuple(tokenize(r)) for r in obj["references"])
            if not refs:
                raise CorpusError(f"{path}: line {n}: empty reference list")
            pairs.append(EvalPair(candidate=tuple(tokenize(obj["candidate"])), references=refs))
            gold_anchors.append(list(obj.get("gold_anchors") or []))
            ids.append(str(obj["id"]))
    if not pairs:
        raise CorpusError(f"{path}: no eval pairs")
    return ids, pairs, gold_anchors


def text_metrics(pairs: Sequence[EvalPair]) -> dict[str, float]:
    return {
        "bleu1": bleu(pairs, 1),
        "bleu2": bleu(pairs, 2),
        "bleu3": bleu(pairs, 3),
        "bleu4": bleu(pairs, 4),
        "cider": cider(pairs),
    }


def write_metrics(metrics: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
