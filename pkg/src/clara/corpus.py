"""Report corpus primitives: tokenization, sentence splitting, vocabulary, JSONL I/O."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .anchors import MODALITIES, validate_anchors
from .errors import CorpusError

PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN = "<pad>", "<unk>", "<bos>", "<eos>"
RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3

# section holding the narrative text, when the caller does not say otherwise
DEFAULT_SECTION = {"xray": "findings", "eeg": "impression"}

_PUNCT_RE = re.compile(r"([.,;:()])")
_SENT_END_RE = re.compile(r"\.(?=\s|$)")


def tokenize(text: str) -> list[str]:
    """Lowercase, isolate . , ; : ( ) as standalone tokens, split on whitespace."""
    return _PUNCT_RE.sub(r" \1 ", text.lower()).split()


def detokenize(tokens: Sequence[str]) -> str:
    """Join tokens, re-attaching punctuation the tokenizer isolated."""
    out: list[str] = []
    for tok in tokens:
        if tok in {".", ",", ";", ":", ")"} and out:
            out[-1] += tok
        elif out and out[-1].endswith("("):
            out[-1] += tok
        else:
            out.append(tok)
    return " ".join(out)


def split_sentences(text: str) -> list[str]:
    """Split a section into sentences on '.' followed by whitespace or end of text.

    Periods are kept on their sentences; an unterminated tail is kept;
    empty strings never appear in the result.
    """
    sentences: list[str] = []
    start = 0
    for match in _SENT_END_RE.finditer(text):
        chunk = text[start : match.end()].strip()
        if chunk:
            sentences.append(chunk)
        start = match.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def normalize_sentence(raw: str) -> str:
    """Canonical sentence form used for uniqueness: lowercase, whitespace collapsed."""
    return " ".join(raw.lower().split())


@dataclass(frozen=True)
class Report:
    """One clinical report: narrative sections plus its gold anchor labels.

    `anchors` keeps file order (first-occurrence) because downstream
    consumers truncate to the first c labels.
    """

    id: str
    modality: str
    sections: dict[str, str]
    anchors: tuple[str, ...] = ()
    signal_ref: str | None = None

    def __post_init__(self) -> None:
        if self.modality not in MODALITIES:
            raise CorpusError(
                f"report {self.id!r}: unknown modality {self.modality!r}"
            )
        object.__setattr__(
            self, "anchors", validate_anchors(self.modality, self.anchors)
        )

    def section_text(self, section: str | None = None) -> str:
        name = section or DEFAULT_SECTION[self.modality]
        return self.sections.get(name, "")

    def sentences(self, section: str | None = None) -> list[str]:
        return split_sentences(self.section_text(section))


def patient_key(report_id: str) -> str:
    """Patient grouping key for split disjointness.

    Ids of the form '...p0042-r00007' group by the p-part; anything else
    is its own patient.
    """
    match = re.search(r"\bp(\d+)\b", report_id)
    if match:
        return "p" + match.group(1)
    return report_id


@dataclass
class Vocabulary:
    """Token table with four reserved entries at fixed ids 0..3."""

    token_to_id: dict[str, int]
    counts: dict[str, int]
    min_count: int

    def __post_init__(self) -> None:
        self.id_to_token: list[str] = [""] * len(self.token_to_id)
        for token, idx in self.token_to_id.items():
            self.id_to_token[idx] = token

    def __len__(self) -> int:
        return len(self.token_to_id)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.token_to_id.get(tok, UNK_ID) for tok in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        try:
            return [self.id_to_token[i] for i in ids]
        except IndexError as exc:
            raise CorpusError(f"token id out of range: {exc}") from None

    def encode_text(self, text: str) -> list[int]:
        return self.encode(tokenize(text))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for idx, token in enumerate(self.id_to_token):
                fh.write(f"{token}\t{idx}\t{self.counts.get(token, 0)}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        token_to_id: dict[str, int] = {}
        counts: dict[str, int] = {}
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise CorpusError(f"vocab line {n + 1}: expected 3 fields")
                token, idx_s, count_s = parts
                try:
                    idx, count = int(idx_s), int(count_s)
                except ValueError:
                    raise CorpusError(f"vocab line {n + 1}: bad integer") from None
                if idx != n:
                    raise CorpusError(
                        f"vocab line {n + 1}: ids must be contiguous from 0, got {idx}"
                    )
                if token in token_to_id:
                    raise CorpusError(f"vocab line {n + 1}: duplicate token {token!r}")
                token_to_id[token] = idx
                counts[token] = count
        for rid, reserved in enumerate(RESERVED_TOKENS):
            if token_to_id.get(reserved) != rid:
                raise CorpusError(f"vocab file missing reserved token {reserved!r} at id {rid}")
        return cls(token_to_id=token_to_id, counts=counts, min_count=0)


def build_vocabulary(
    reports: Sequence[Report], min_count: int = 3, section: str | None = None
) -> Vocabulary:
    """Count tokens over the section of interest and keep those seen >= min_count.

    Kept tokens are id-ordered by (count desc, token asc) after the four
    reserved entries. A corpus token colliding with a reserved surface
    form is an error.
    """
    if not reports:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    for report in reports:
        counts.update(tokenize(report.section_text(section)))
    for reserved in RESERVED_TOKENS:
        if reserved in counts:
            raise CorpusError(f"corpus token collides with reserved token {reserved!r}")
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    token_to_id = {tok: i for i, tok in enumerate(RESERVED_TOKENS)}
    for tok in kept:
        token_to_id[tok] = len(token_to_id)
    return Vocabulary(
        token_to_id=token_to_id,
        counts={tok: counts[tok] for tok in kept},
        min_count=min_count,
    )


def load_corpus(path: str | Path) -> list[Report]:
    """Read a JSONL corpus, validating per line and failing with the line number."""
    reports: list[Report] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {n}: invalid JSON ({exc.msg})") from None
            for field_name in ("id", "modality", "sections"):
                if field_name not in obj:
                    raise CorpusError(f"{path}: line {n}: missing field {field_name!r}")
            if not isinstance(obj["sections"], dict):
                raise CorpusError(f"{path}: line {n}: sections must be an object")
            try:
                report = Report(
                    id=str(obj["id"]),
                    modality=obj["modality"],
                    sections={str(k): str(v) for k, v in obj["sections"].items()},
                    anchors=tuple(obj.get("anchors") or ()),
                    signal_ref=obj.get("signal_ref"),
                )
            except CorpusError as exc:
                raise CorpusError(f"{path}: line {n}: {exc}") from None
            if report.id in seen_ids:
                raise CorpusError(f"{path}: line {n}: duplicate report id {report.id!r}")
            seen_ids.add(report.id)
            reports.append(report)
    return reports


def write_corpus(reports: Sequence[Report], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(
                json.dumps(
                    {
                        "id": report.id,
                        "modality": report.modality,
                        "sections": report.sections,
                        "anchors": list(report.anchors),
                        "signal_ref": report.signal_ref,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
