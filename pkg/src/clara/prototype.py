"""Sentence repository with inverted-index retrieval.

Sentences from the corpus are deduplicated into weighted prototype entries
(weight = how many times the sentence occurred). Scoring follows the classic
tf-idf form

    score(q, d) = coord(q, d) * queryNorm(q)
                  * sum_t sqrt(tf(t, d)) * idf(t)^2 * boost(t) * norm(t, d)

with idf(t) = 1 + ln(N / (df(t) + 1)), norm(t, d) = lengthNorm(d) * docBoost(d),
lengthNorm = 1/sqrt(|d| tokens) and docBoost = 1 + ln(weight).
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Report, UNK_ID, Vocabulary, normalize_sentence, tokenize
from .errors import CorpusError, EmptyQueryError

ANCHOR_BOOST = 2.0


@dataclass
class PrototypeEntry:
    """One unique sentence: id, surface form, token ids, occurrence count."""

    sentence_id: int
    raw: str
    tokens: list[int]
    weight: int = 1

    def __post_init__(self) -> None:
        if not self.tokens:
            raise CorpusError(f"prototype {self.sentence_id}: empty token list")
        if self.weight < 1:
            raise CorpusError(f"prototype {self.sentence_id}: weight must be >= 1")

    @property
    def length_norm(self) -> float:
        return 1.0 / math.sqrt(len(self.tokens))

    @property
    def doc_boost(self) -> float:
        return 1.0 + math.log(self.weight)


@dataclass
class Query:
    """Term ids with per-term boosts and an overall query boost.

    `terms` preserves construction order and may repeat a term; coord and
    the scoring sum count each listed occurrence.
    """

    terms: list[int]
    boosts: dict[int, float] = field(default_factory=dict)
    query_boost: float = 1.0

    def __post_init__(self) -> None:
        if self.query_boost <= 0:
            raise EmptyQueryError("query boost must be positive")
        for term, boost in self.boosts.items():
            if boost <= 0:
                raise EmptyQueryError(f"boost for term {term} must be positive")

    def boost(self, term: int) -> float:
        return self.boosts.get(term, 1.0)


class InvertedIndex:
    """Postings keyed by token id; each posting is (sentence_id, term frequency)."""

    def __init__(self) -> None:
        self.postings: dict[int, list[tuple[int, int]]] = {}
        self.num_docs: int = 0

    def doc_freq(self, term: int) -> int:
        return len(self.postings.get(term, ()))

    def add(self, entry: PrototypeEntry) -> None:
        for term, tf in Counter(entry.tokens).items():
            self.postings.setdefault(term, []).append((entry.sentence_id, tf))
        self.num_docs += 1


class Repository:
    """Deduplicated prototype sentences plus their inverted index.

    Not safe for concurrent mutation; callers serialize writes.
    """

    def __init__(self, vocab: Vocabulary, vocab_ref: str = "") -> None:
        self.vocab = vocab
        self.vocab_ref = vocab_ref
        self.entries: list[PrototypeEntry] = []
        self.index = InvertedIndex()
        self._by_norm: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, sentence_id: int) -> PrototypeEntry:
        if not 0 <= sentence_id < len(self.entries):
            raise CorpusError(f"unknown sentence id {sentence_id}")
        return self.entries[sentence_id]

    def add_sentence(self, raw: str) -> PrototypeEntry:
        """Insert one sentence: bump the weight if seen, else index a new entry."""
        norm = normalize_sentence(raw)
        if not norm:
            raise CorpusError("cannot add an empty sentence")
        known = self._by_norm.get(norm)
        if known is not None:
            self.entries[known].weight += 1
            return self.entries[known]
        entry = PrototypeEntry(
            sentence_id=len(self.entries),
            raw=norm,
            tokens=self.vocab.encode(tokenize(norm)),
        )
        self.entries.append(entry)
        self._by_norm[norm] = entry.sentence_id
        self.index.add(entry)
        return entry

    def add_report(self, report: Report, section: str | None = None) -> list[int]:
        """Incrementally index every sentence of one report; returns their ids."""
        return [self.add_sentence(s).sentence_id for s in report.sentences(section)]


def build_repository(
    reports: Sequence[Report], vocab: Vocabulary, section: str | None = None
) -> Repository:
    """Batch-build a repository from a corpus in one pass over all sentences.

    Kept separate from the incremental path on purpose: tests hold the two
    routes against each other.
    """
    raws: list[str] = []
    weights: Counter[str] = Counter()
    for report in reports:
        for sentence in report.sentences(section):
            norm = normalize_sentence(sentence)
            if norm not in weights:
                raws.append(norm)
            weights[norm] += 1
    if not raws:
        raise CorpusError("corpus has no sentences to index")
    repo = Repository(vocab)
    for sid, norm in enumerate(raws):
        entry = PrototypeEntry(
            sentence_id=sid,
            raw=norm,
            tokens=vocab.encode(tokenize(norm)),
            weight=weights[norm],
        )
        repo.entries.append(entry)
        repo._by_norm[norm] = sid
    for entry in repo.entries:
        repo.index.add(entry)
    return repo


def idf(index: InvertedIndex, term: int) -> float:
    return 1.0 + math.log(index.num_docs / (index.doc_freq(term) + 1.0))


def _query_norm(query: Query, index: InvertedIndex) -> float:
    total = sum((idf(index, t) * query.boost(t)) ** 2 for t in query.terms)
    return 1.0 / math.sqrt(total) if total > 0 else 0.0


def _term_weight(query: Query, index: InvertedIndex, term: int) -> float:
    # shared by score() and retrieve() so both paths are bit-identical
    term_idf = idf(index, term)
    return term_idf * term_idf * query.boost(term)


def _combine(coord, qnorm, acc, entry: PrototypeEntry, query_boost: float) -> float:
    value = coord * qnorm * acc
    value *= entry.length_norm
    value *= entry.doc_boost
    value *= query_boost
    return value


def score(query: Query, entry: PrototypeEntry, index: InvertedIndex) -> float:
    """Score one entry against a query; 0.0 when nothing overlaps."""
    if not query.terms:
        raise EmptyQueryError("cannot score an empty query")
    counts = Counter(entry.tokens)
    matched = sum(1 for t in query.terms if counts.get(t, 0) > 0)
    if matched == 0:
        return 0.0
    coord = matched / len(query.terms)
    qnorm = _query_norm(query, index)
    acc = 0.0
    for t in query.terms:
        tf = counts.get(t, 0)
        if tf > 0:
            acc += math.sqrt(tf) * _term_weight(query, index, t)
    return _combine(coord, qnorm, acc, entry, query.query_boost)


@dataclass(frozen=True)
class RetrievalHit:
    sentence_id: int
    score: float
    entry: PrototypeEntry


def retrieve(repo: Repository, query: Query, k: int = 1) -> list[RetrievalHit]:
    """Top-k entries by score, ties broken by higher weight then lower id.

    Walks postings only for the query's terms; the result order and scores
    match exhaustive scoring of every entry exactly.
    """
    if not query.terms:
        raise EmptyQueryError("cannot retrieve with an empty query")
    if k < 1:
        return []
    index = repo.index
    qnorm = _query_norm(query, index)
    acc: dict[int, float] = {}
    matched: dict[int, int] = {}
    for t in query.terms:
        weight = _term_weight(query, index, t)
        for sid, tf in index.postings.get(t, ()):
            acc[sid] = acc.get(sid, 0.0) + math.sqrt(tf) * weight
            matched[sid] = matched.get(sid, 0) + 1
    n_terms = len(query.terms)
    hits: list[RetrievalHit] = []
    for sid, raw_sum in acc.items():
        entry = repo.entries[sid]
        coord = matched[sid] / n_terms
        value = _combine(coord, qnorm, raw_sum, entry, query.query_boost)
        hits.append(RetrievalHit(sentence_id=sid, score=value, entry=entry))
    hits.sort(key=lambda h: (-h.score, -h.entry.weight, h.sentence_id))
    return hits[:k]


def make_query(
    anchors: Iterable[str],
    prefix: str | None,
    vocab: Vocabulary,
    anchor_boost: float = ANCHOR_BOOST,
) -> Query:
    """Build a query from anchor labels (boost 2.0) plus an optional typed prefix.

    Unknown-word tokens are dropped; a query with no surviving terms is an error.
    """
    terms: list[int] = []
    boosts: dict[int, float] = {}
    for label in anchors:
        for tok in vocab.encode(tokenize(label)):
            if tok == UNK_ID:
                continue
            terms.append(tok)
            boosts[tok] = anchor_boost
    if prefix:
        for tok in vocab.encode(tokenize(prefix)):
            if tok == UNK_ID:
                continue
            terms.append(tok)
            boosts.setdefault(tok, 1.0)
    if not terms:
        raise EmptyQueryError("query has no in-vocabulary terms")
    return Query(terms=terms, boosts=boosts)


def save_repository(repo: Repository, path: str | Path, vocab_ref: str = "") -> None:
    """Write the snapshot: a header line, then one line per entry in id order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"num_docs": repo.index.num_docs, "vocab_ref": vocab_ref or repo.vocab_ref}) + "\n")
        for entry in repo.entries:
            fh.write(
                json.dumps(
                    {"sid": entry.sentence_id, "raw": entry.raw, "weight": entry.weight},
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_repository(path: str | Path, vocab: Vocabulary) -> Repository:
    """Rebuild a repository (and its index) from a snapshot file."""
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
            num_docs = int(header["num_docs"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise CorpusError(f"{path}: bad snapshot header") from None
        repo = Repository(vocab, vocab_ref=str(header.get("vocab_ref", "")))
        for n, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                sid, raw, weight = int(obj["sid"]), str(obj["raw"]), int(obj["weight"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise CorpusError(f"{path}: line {n}: bad snapshot entry") from None
            if sid != len(repo.entries):
                raise CorpusError(f"{path}: line {n}: sentence ids must be contiguous")
            entry = PrototypeEntry(
                sentence_id=sid, raw=raw, tokens=vocab.encode(tokenize(raw)), weight=weight
            )
            repo.entries.append(entry)
            repo._by_norm[raw] = sid
    for entry in repo.entries:
        repo.index.add(entry)
    if repo.index.num_docs != num_docs:
        raise CorpusError(
            f"{path}: header num_docs {num_docs} != {repo.index.num_docs} entries"
        )
    return repo
