"""End-to-end generation: model bundle, report assembly, splits, eval, sweep."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .anchors import validate_anchors
from .corpus import (
    Report,
    Vocabulary,
    build_vocabulary,
    detokenize,
    patient_key,
    tokenize,
)
from .editor import (
    EditInput,
    EditorParams,
    EditorTrainConfig,
    edit_sentence,
    encode_template,
    train_editor,
)
from .encoder import (
    AnchorClassifier,
    ClassifierTrainConfig,
    EncoderParams,
    encode_recording,
    predict_anchor_words,
    read_recording,
    train_anchor_classifier,
)
from .errors import ClaraError, CorpusError, EmptyQueryError, SplitOverlapError
from .metrics import EvalPair, text_metrics
from .phenotype import (
    PhenotypeClassifier,
    PhenotypeTrainConfig,
    phenotype_eval,
    train_phenotype,
)
from .prototype import (
    Repository,
    build_repository,
    load_repository,
    make_query,
    retrieve,
    save_repository,
)
from .synth import report_embedding

MODES = ("full", "retrieve_only")


@dataclass
class GenerationConfig:
    mode: str = "full"
    anchor_source: str = "user"  # or "predicted"
    max_anchors: int = 5
    sentence_budget: int | None = None
    k_retrieve: int = 1
    max_len: int = 40
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ClaraError(f"unknown generation mode {self.mode!r}")
        if self.anchor_source not in ("user", "predicted"):
            raise ClaraError(f"unknown anchor source {self.anchor_source!r}")
        if self.k_retrieve < 1:
            raise ClaraError("k_retrieve must be at least 1")


@dataclass(frozen=True)
class SentenceRecord:
    """Where one generated sentence came from."""

    anchor: str
    text: str
    template_id: int | None
    template: str | None
    score: float | None
    edited: bool
    note: str = ""


@dataclass
class GeneratedReport:
    anchors: list[str]
    sentences: list[SentenceRecord]

    @property
    def text(self) -> str:
        return " ".join(s.text for s in self.sentences if s.text)


@dataclass
class ModelBundle:
    """Everything the generator and the service need, loadable from one directory."""

    modality: str
    vocab: Vocabulary
    repo: Repository
    editor: EditorParams | None = None
    anchor_clf: AnchorClassifier | None = None
    phenotype_clf: PhenotypeClassifier | None = None
    encoder: EncoderParams | None = None
    embed_dim: int = 96
    embed_seed: int = 0
    section: str | None = None
    split_ids: dict[str, list[str]] = field(default_factory=dict)

    def embedding_for_report(self, report: Report) -> np.ndarray:
        if report.signal_ref and self.encoder is not None:
            return encode_recording(read_recording(report.signal_ref), self.encoder)
        return report_embedding(report, dim=self.embed_dim, seed=self.embed_seed,
                                section=self.section)

    def embedding_from_signal(self, path: str | Path) -> np.ndarray:
        if self.encoder is None:
            raise ClaraError("no signal encoder in this model bundle")
        return encode_recording(read_recording(path), self.encoder)

    def save(self, model_dir: str | Path) -> None:
        out = Path(model_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.vocab.save(out / "vocab.tsv")
        save_repository(self.repo, out / "repo.jsonl", vocab_ref="vocab.tsv")
        if self.editor is not None:
            self.editor.save(out / "editor.bin")
        if self.anchor_clf is not None:
            self.anchor_clf.save(out / "anchor_clf.bin")
        if self.phenotype_clf is not None:
            self.phenotype_clf.save(out / "phenotype.bin")
        if self.encoder is not None:
            self.encoder.save(out / "encoder.bin")
        meta = {
            "modality": self.modality,
            "embed_dim": self.embed_dim,
            "embed_seed": self.embed_seed,
            "section": self.section,
            "split_ids": self.split_ids,
        }
        (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, model_dir: str | Path) -> "ModelBundle":
        root = Path(model_dir)
        meta_path = root / "meta.json"
        if not meta_path.exists():
            raise CorpusError(f"{model_dir}: not a model directory (no meta.json)")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        vocab = Vocabulary.load(root / "vocab.tsv")
        repo = load_repository(root / "repo.jsonl", vocab)
        bundle = cls(
            modality=meta["modality"],
            vocab=vocab,
            repo=repo,
            embed_dim=int(meta.get("embed_dim", 96)),
            embed_seed=int(meta.get("embed_seed", 0)),
            section=meta.get("section"),
            split_ids=meta.get("split_ids", {}),
        )
        if (root / "editor.bin").exists():
            bundle.editor = EditorParams.load(root / "editor.bin")
        if (root / "anchor_clf.bin").exists():
            bundle.anchor_clf = AnchorClassifier.load(root / "anchor_clf.bin")
        if (root / "phenotype.bin").exists():
            bundle.phenotype_clf = PhenotypeClassifier.load(root / "phenotype.bin")
        if (root / "encoder.bin").exists():
            bundle.encoder = EncoderParams.load(root / "encoder.bin")
        return bundle


def resolve_anchors(bundle: ModelBundle, embedding: np.ndarray,
                    anchors: Sequence[str] | None, config: GenerationConfig) -> list[str]:
    """Validated user anchors, or classifier predictions when asked/needed."""
    if anchors and config.anchor_source == "user":
        return list(validate_anchors(bundle.modality, anchors))[: config.max_anchors]
    if bundle.anchor_clf is None:
        raise ClaraError("no anchors given and no anchor classifier available")
    return predict_anchor_words(embedding, bundle.anchor_clf)[: config.max_anchors]


def generate_report(
    bundle: ModelBundle,
    embedding: np.ndarray,
    anchors: Sequence[str] | None = None,
    prefixes: Sequence[str | None] | None = None,
    config: GenerationConfig | None = None,
) -> GeneratedReport:
    """Compose a report sentence by sentence.

    Slot j queries the repository with anchor j (round-robin when the budget
    exceeds the anchor count); in full mode the top template is rewritten by
    the edit model with the running context, otherwise it is emitted verbatim.
    An empty retrieval marks the slot and stops.
    """
    config = config or GenerationConfig()
    if config.mode == "full" and bundle.editor is None:
        raise ClaraError("full mode needs an edit model in the bundle")
    chosen = resolve_anchors(bundle, embedding, anchors, config)
    if not chosen:
        raise ClaraError("no anchors to generate from")
    budget = config.sentence_budget or len(chosen)
    z = np.zeros(bundle.editor.hidden) if bundle.editor is not None else None
    records: list[SentenceRecord] = []
    for j in range(budget):
        anchor = chosen[j % len(chosen)]
        prefix_text = prefixes[j] if prefixes and j < len(prefixes) else None
        try:
            query = make_query([anchor], prefix_text, bundle.vocab)
            hits = retrieve(bundle.repo, query, k=config.k_retrieve)
        except EmptyQueryError:
            hits = []
        if not hits:
            records.append(SentenceRecord(anchor=anchor, text="", template_id=None,
                                          template=None, score=None, edited=False,
                                          note="no-template"))
            break
        top = hits[0]
        if config.mode == "retrieve_only":
            records.append(SentenceRecord(anchor=anchor, text=top.entry.raw,
                                          template_id=top.sentence_id,
                                          template=top.entry.raw, score=top.score,
                                          edited=False))
            continue
        prefix_ids = None
        if prefix_text:
            from .corpus import UNK_ID

            prefix_ids = [t for t in bundle.vocab.encode_text(prefix_text) if t != UNK_ID]
        edit = EditInput(template=top.entry.tokens, embedding=embedding,
                         prev_context=z, prefix=prefix_ids or None,
                         max_len=config.max_len)
        tokens, z = edit_sentence(edit, bundle.editor)
        text = detokenize(bundle.vocab.decode(tokens))
        records.append(SentenceRecord(anchor=anchor, text=text,
                                      template_id=top.sentence_id,
                                      template=top.entry.raw, score=top.score,
                                      edited=True))
    return GeneratedReport(anchors=chosen, sentences=records)


# ------------------------------------------------------------------ splits ---


def split_corpus(reports: Sequence[Report], seed: int = 0,
                 ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)):
    """Patient-disjoint train/val/test split, deterministic in the seed.

    Patients are shuffled and assigned greedily until each part reaches its
    share of reports; reports keep corpus order inside each part.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ClaraError(f"split ratios must sum to 1, got {ratios}")
    by_patient: dict[str, list[int]] = {}
    for i, report in enumerate(reports):
        by_patient.setdefault(patient_key(report.id), []).append(i)
    patients = list(by_patient)
    rng = np.random.default_rng(seed)
    rng.shuffle(patients)
    n = len(reports)
    thresholds = (ratios[0] * n, (ratios[0] + ratios[1]) * n)
    parts: tuple[list[int], list[int], list[int]] = ([], [], [])
    assigned = 0
    for patient in patients:
        members = by_patient[patient]
        if assigned < thresholds[0]:
            parts[0].extend(members)
        elif assigned < thresholds[1]:
            parts[1].extend(members)
        else:
            parts[2].extend(members)
        assigned += len(members)
    return tuple([reports[i] for i in sorted(part)] for part in parts)


def check_patient_disjoint(*splits: Sequence[Report]) -> None:
    keysets = [{patient_key(r.id) for r in split} for split in splits]
    for a in range(len(keysets)):
        for b in range(a + 1, len(keysets)):
            shared = keysets[a] & keysets[b]
            if shared:
                raise SplitOverlapError(
                    f"splits {a} and {b} share patients, e.g. {sorted(shared)[0]!r}"
                )


# ---------------------------------------------------------------- training ---


@dataclass
class TrainSettings:
    seed: int = 0
    min_count: int = 3
    embed_dim: int = 96
    token_dim: int = 48
    hidden: int = 96
    max_len: int = 24
    editor_epochs: int = 25
    editor_rounds: int = 2
    editor_lr: float = 1e-3
    editor_batch: int = 32
    clf_epochs: int = 60
    clf_lr: float = 2e-3
    phenotype_epochs: int = 30
    phenotype_lr: float = 4e-3
    phenotype_max_len: int = 512
    section: str | None = None


def build_editor_pairs(bundle: ModelBundle, reports: Sequence[Report],
                       max_len: int) -> list[tuple[EditInput, list[int]]]:
    """Training pairs for the edit model, chaining context through each report.

    Slot j pairs the retrieved template for anchor j with gold sentence j; the
    context fed to slot j is the encoder's output for slot j-1's template,
    which is exactly the recursion generation uses.
    """
    pairs: list[tuple[EditInput, list[int]]] = []
    for report in reports:
        feats = bundle.embedding_for_report(report)
        sentences = report.sentences(bundle.section)
        z = np.zeros(bundle.editor.hidden)
        for j, anchor in enumerate(report.anchors):
            if j >= len(sentences):
                break
            try:
                query = make_query([anchor], None, bundle.vocab)
                hits = retrieve(bundle.repo, query, k=1)
            except EmptyQueryError:
                continue
            if not hits:
                continue
            template = hits[0].entry.tokens
            target = bundle.vocab.encode_text(sentences[j])
            edit = EditInput(template=template, embedding=feats,
                             prev_context=z.copy(), max_len=max_len)
            if target and len(target) < max_len:
                pairs.append((edit, target))
            z = encode_template(edit, bundle.editor)
    return pairs


def train_bundle(train_reports: Sequence[Report], modality: str,
                 settings: TrainSettings | None = None,
                 progress: Callable[[str], None] | None = None) -> ModelBundle:
    """Build vocabulary, repository, and all three learned models from a train split."""
    settings = settings or TrainSettings()
    say = progress or (lambda _msg: None)
    vocab = build_vocabulary(train_reports, min_count=settings.min_count,
                             section=settings.section)
    repo = build_repository(train_reports, vocab, section=settings.section)
    say(f"vocabulary {len(vocab)} tokens, repository {len(repo)} prototypes")

    bundle = ModelBundle(
        modality=modality, vocab=vocab, repo=repo,
        embed_dim=settings.embed_dim, embed_seed=settings.seed,
        section=settings.section,
    )

    feats = np.stack([bundle.embedding_for_report(r) for r in train_reports])
    bundle.anchor_clf = train_anchor_classifier(
        feats, [r.anchors for r in train_reports], modality,
        ClassifierTrainConfig(epochs=settings.clf_epochs, lr=settings.clf_lr,
                              seed=settings.seed),
    )
    say(f"anchor classifier trained, final loss {bundle.anchor_clf.loss_history[-1]:.4f}")

    bundle.editor = EditorParams.init(
        vocab_size=len(vocab), seed=settings.seed, token_dim=settings.token_dim,
        hidden=settings.hidden, feature_dim=settings.embed_dim,
        max_len=settings.max_len,
    )
    for round_idx in range(settings.editor_rounds):
        pairs = build_editor_pairs(bundle, train_reports, settings.max_len)
        if not pairs:
            raise CorpusError("no editor training pairs could be built")
        train_editor(pairs, bundle.editor,
                     EditorTrainConfig(epochs=settings.editor_epochs,
                                       lr=settings.editor_lr,
                                       batch_size=settings.editor_batch,
                                       seed=settings.seed + round_idx))
        say(f"editor round {round_idx + 1}: loss {bundle.editor.loss_history[-1]:.4f} "
            f"({len(pairs)} pairs)")

    bundle.phenotype_clf = train_phenotype(
        [r.section_text(settings.section) for r in train_reports],
        [r.anchors for r in train_reports], modality,
        PhenotypeTrainConfig(epochs=settings.phenotype_epochs,
                             lr=settings.phenotype_lr, seed=settings.seed,
                             batch_size=64),
        clf=PhenotypeClassifier.init(modality, max_len=settings.phenotype_max_len,
                                     seed=settings.seed),
    )
    say(f"phenotype classifier trained, final loss {bundle.phenotype_clf.loss_history[-1]:.4f}")
    return bundle


# -------------------------------------------------------------- evaluation ---


@dataclass
class EvalOutcome:
    metrics: dict[str, float]
    ids: list[str]
    candidates: list[str]
    references: list[str]
    gold_anchors: list[tuple[str, ...]]

    def eval_rows(self) -> list[dict]:
        return [
            {"id": i, "candidate": c, "references": [r], "gold_anchors": list(g)}
            for i, c, r, g in zip(self.ids, self.candidates, self.references,
                                  self.gold_anchors)
        ]


def evaluate_split(bundle: ModelBundle, reports: Sequence[Report],
                   config: GenerationConfig | None = None,
                   anchor_cap: int | None = None) -> EvalOutcome:
    """Generate for every report and score against its gold section text."""
    config = config or GenerationConfig()
    if not reports:
        raise CorpusError("nothing to evaluate")
    ids, candidates, references, gold = [], [], [], []
    pairs = []
    for report in reports:
        feats = bundle.embedding_for_report(report)
        anchors = list(report.anchors)
        if anchor_cap is not None:
            anchors = anchors[:anchor_cap]
        generated = generate_report(bundle, feats, anchors or None, config=config)
        reference = report.section_text(bundle.section)
        ids.append(report.id)
        candidates.append(generated.text)
        references.append(reference)
        gold.append(report.anchors)
        pairs.append(EvalPair(candidate=tuple(tokenize(generated.text)),
                              references=(tuple(tokenize(reference)),)))
    metrics = text_metrics(pairs)
    if bundle.phenotype_clf is not None:
        accuracy, auc = phenotype_eval(bundle.phenotype_clf, candidates, gold)
        metrics["phenotype_accuracy"] = accuracy
        metrics["phenotype_pr_auc"] = auc
    return EvalOutcome(metrics=metrics, ids=ids, candidates=candidates,
                       references=references, gold_anchors=gold)


def anchor_sweep(bundle: ModelBundle, reports: Sequence[Report],
                 counts: Sequence[int] = (1, 2, 3, 4, 5),
                 config: GenerationConfig | None = None) -> list[dict[str, float]]:
    """Evaluate with gold anchors truncated to the first c, for each c."""
    rows = []
    for count in counts:
        if count < 1:
            raise ClaraError("anchor counts must be positive")
        outcome = evaluate_split(bundle, reports, config=config, anchor_cap=count)
        row = {"anchor_count": count}
        row.update({k: outcome.metrics[k] for k in ("cider", "bleu1", "bleu2", "bleu3", "bleu4")})
        rows.append(row)
    return rows


def sweep_csv(rows: Sequence[dict]) -> str:
    header = "anchor_count,cider,bleu1,bleu2,bleu3,bleu4"
    lines = [header]
    for row in rows:
        lines.append(
            f"{int(row['anchor_count'])},{row['cider']:.6f},{row['bleu1']:.6f},"
            f"{row['bleu2']:.6f},{row['bleu3']:.6f},{row['bleu4']:.6f}"
        )
    return "\n".join(lines) + "\n"


def config_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]
