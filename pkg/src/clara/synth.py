"""Deterministic synthetic report corpora and signal-free stand-in embeddings.

The generator composes reports from per-anchor template families. Two
properties are built in rather than hoped for:

* a positive template for anchor A appears only in reports carrying A, so
  gold labels are recoverable from the text;
* negated findings ("no seizure activity observed.") are short and far more
  frequent than any positive variant, so lexical retrieval prefers them for
  the handful of anchors they mention. An edit model conditioned on the
  input embedding has to undo that.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .anchors import NORMAL_ANCHOR, anchor_vocabulary
from .corpus import Report, normalize_sentence, split_sentences
from .errors import CorpusError

DEFAULT_EMBED_DIM = 96

# variant popularity inside one anchor family, most common first
_VARIANT_WEIGHTS = (0.55, 0.30, 0.15)


@dataclass(frozen=True)
class TemplateBank:
    modality: str
    normal_anchor: str
    positives: dict[str, tuple[str, ...]]
    negations: tuple[str, ...]
    closers: tuple[str, ...]
    abnormal_weights: dict[str, float]
    normal_fraction: float = 0.45


_EEG_POSITIVES = {
    "Normality": (
        "the recording is within the range of normality .",
        "background activity is within normality for age .",
        "normality of the awake record is noted .",
    ),
    "Sleep": (
        "stage two sleep is captured with symmetric features .",
        "the patient achieved stage two sleep during the recording .",
        "sleep is recorded with preserved architecture .",
    ),
    "Generalized Slowing": (
        "there is generalized slowing of the background activity .",
        "diffuse generalized slowing is present throughout the record .",
        "mild generalized slowing is noted in all regions .",
    ),
    "Focal Slowing": (
        "focal slowing is seen over the left temporal region .",
        "intermittent focal slowing is present in the right hemisphere .",
        "focal slowing is observed over the anterior quadrant .",
    ),
    "Epileptiform Discharges": (
        "frequent epileptiform discharges are seen in the temporal region .",
        "occasional epileptiform discharges are captured in the record .",
        "epileptiform discharges are present over the left hemisphere .",
    ),
    "Drowsiness": (
        "drowsiness is characterized by attenuation of the posterior rhythm .",
        "intermittent drowsiness is present through much of the recording .",
        "drowsiness appears in the later portions of the record .",
    ),
    "Spindles": (
        "spindles are symmetric and well formed .",
        "frequent central spindles are recorded bilaterally .",
        "spindles appear with expected morphology .",
    ),
    "Vertex Waves": (
        "vertex waves appear with normal morphology .",
        "symmetric vertex waves are captured .",
        "vertex waves are well developed .",
    ),
    "Seizure": (
        "frequent seizure activity is recorded during the study .",
        "a brief electrographic seizure is captured in the temporal region .",
        "seizure activity is present with rhythmic evolution .",
    ),
}

# short and popular on purpose; the first three mention anchor tokens and
# therefore outscore the positive variants under lexical retrieval
_EEG_NEGATIONS = (
    "no seizure activity observed .",
    "no epileptiform discharges noted .",
    "no generalized slowing present .",
    "the posterior rhythm is symmetric .",
    "no focal features were seen .",
    "photic stimulation produced no abnormality .",
)

_EEG_CLOSERS = (
    "clinical correlation is recommended .",
    "comparison with prior studies may be helpful .",
)

_EEG_ABNORMAL_WEIGHTS = {
    "Seizure": 0.16,
    "Epileptiform Discharges": 0.16,
    "Generalized Slowing": 0.14,
    "Focal Slowing": 0.12,
    "Sleep": 0.12,
    "Drowsiness": 0.11,
    "Spindles": 0.10,
    "Vertex Waves": 0.09,
}

_XRAY_POSITIVES = {
    "No Finding": (
        "no acute cardiopulmonary finding is identified .",
        "no acute finding in the chest .",
        "the chest is without acute finding .",
    ),
    "Enlarged Cardiomediastinum": (
        "the cardiomediastinum is enlarged .",
        "enlarged cardiomediastinum is noted .",
        "the cardiomediastinal silhouette appears enlarged .",
    ),
    "Cardiomegaly": (
        "moderate cardiomegaly is present .",
        "stable mild cardiomegaly is again seen .",
        "cardiomegaly is noted without change .",
    ),
    "Lung Lesion": (
        "a focal lung lesion is seen in the right upper lobe .",
        "a rounded lung lesion is present on the left .",
        "the lung lesion is unchanged from prior imaging .",
    ),
    "Airspace Opacity": (
        "patchy airspace opacity is present at the left base .",
        "airspace opacity is seen in the right lower lobe .",
        "multifocal airspace opacity is identified .",
    ),
    "Edema": (
        "mild interstitial edema is present .",
        "pulmonary edema is seen with vascular congestion .",
        "findings reflect improving edema .",
    ),
    "Consolidation": (
        "focal consolidation is seen at the right base .",
        "dense consolidation is present in the left lower lobe .",
        "patchy consolidation is identified .",
    ),
    "Pneumonia": (
        "findings are concerning for pneumonia .",
        "right basilar pneumonia is suspected .",
        "pneumonia is favored over atelectasis by distribution .",
    ),
    "Atelectasis": (
        "bibasilar atelectasis is present .",
        "minor atelectasis is seen at the lung bases .",
        "plate like atelectasis is noted on the left .",
    ),
    "Pneumothorax": (
        "a small apical pneumothorax is present on the right .",
        "a trace pneumothorax is identified .",
        "the pneumothorax is stable in size .",
    ),
    "Pleural Effusion": (
        "a small right pleural effusion is present .",
        "a layering left pleural effusion is seen .",
        "the pleural effusion has increased in size .",
    ),
    "Pleural Other": (
        "pleural thickening and other pleural abnormality are noted .",
        "other pleural findings include apical pleural scarring .",
        "pleural calcification and other chronic pleural change are seen .",
    ),
    "Fracture": (
        "an acute rib fracture is identified .",
        "a healing fracture is seen in the lateral ribs .",
        "no displacement of the known fracture .",
    ),
}

_XRAY_NEGATIONS = (
    "no pneumothorax .",
    "no pleural effusion .",
    "no focal consolidation .",
    "the heart size is normal .",
    "no acute osseous abnormality .",
    "the visualized lungs are clear .",
)

_XRAY_CLOSERS = (
    "clinical correlation is recommended .",
    "dedicated imaging may be obtained if indicated .",
)

_XRAY_ABNORMAL_WEIGHTS = {
    "Pneumothorax": 0.13,
    "Pleural Effusion": 0.13,
    "Consolidation": 0.12,
    "Cardiomegaly": 0.10,
    "Atelectasis": 0.10,
    "Airspace Opacity": 0.09,
    "Edema": 0.09,
    "Pneumonia": 0.08,
    "Lung Lesion": 0.06,
    "Enlarged Cardiomediastinum": 0.04,
    "Pleural Other": 0.03,
    "Fracture": 0.03,
}


def template_bank(modality: str) -> TemplateBank:
    if modality == "eeg":
        return TemplateBank(
            modality="eeg",
            normal_anchor=NORMAL_ANCHOR["eeg"],
            positives=_EEG_POSITIVES,
            negations=_EEG_NEGATIONS,
            closers=_EEG_CLOSERS,
            abnormal_weights=_EEG_ABNORMAL_WEIGHTS,
        )
    if modality == "xray":
        return TemplateBank(
            modality="xray",
            normal_anchor=NORMAL_ANCHOR["xray"],
            positives=_XRAY_POSITIVES,
            negations=_XRAY_NEGATIONS,
            closers=_XRAY_CLOSERS,
            abnormal_weights=_XRAY_ABNORMAL_WEIGHTS,
        )
    raise CorpusError(f"no template bank for modality {modality!r}")


def _pick_variant(rng: np.random.Generator, variants: tuple[str, ...]) -> str:
    probs = np.array(_VARIANT_WEIGHTS[: len(variants)], dtype=np.float64)
    probs /= probs.sum()
    return variants[int(rng.choice(len(variants), p=probs))]


def synth_corpus(seed: int, n_reports: int, modality: str = "eeg") -> list[Report]:
    """Generate a deterministic corpus of n_reports synthetic reports.

    Same (seed, n_reports, modality) always yields byte-identical reports.
    Report ids encode a patient assignment (about 1.8 reports per patient)
    so corpora can be split patient-disjoint.
    """
    if n_reports <= 0:
        raise CorpusError("n_reports must be positive")
    bank = template_bank(modality)
    vocab = anchor_vocabulary(modality)
    abnormal_labels = [a for a in vocab if a != bank.normal_anchor and a in bank.abnormal_weights]
    weights = np.array([bank.abnormal_weights[a] for a in abnormal_labels], dtype=np.float64)
    weights /= weights.sum()
    section = "impression" if modality == "eeg" else "findings"

    rng = np.random.default_rng(seed)
    n_patients = max(1, int(round(n_reports * 0.55)))
    reports: list[Report] = []
    for i in range(n_reports):
        patient = int(rng.integers(0, n_patients))
        if rng.random() < bank.normal_fraction:
            anchors: tuple[str, ...] = (bank.normal_anchor,)
            sentences = [_pick_variant(rng, bank.positives[bank.normal_anchor])]
            k_neg = 2 + int(rng.integers(0, 2))
            chosen = rng.choice(len(bank.negations), size=k_neg, replace=False)
            sentences.extend(bank.negations[j] for j in sorted(int(c) for c in chosen))
        else:
            k = 1 + int(rng.choice(5, p=[0.20, 0.30, 0.25, 0.15, 0.10]))
            idx = rng.choice(len(abnormal_labels), size=k, replace=False, p=weights)
            anchors = tuple(abnormal_labels[int(j)] for j in idx)
            sentences = [_pick_variant(rng, bank.positives[a]) for a in anchors]
            if rng.random() < 0.30:
                sentences.append(bank.closers[int(rng.integers(0, len(bank.closers)))])
        reports.append(
            Report(
                id=f"{modality}-p{patient:05d}-r{i:05d}",
                modality=modality,
                sections={section: " ".join(sentences)},
                anchors=anchors,
            )
        )
    return reports


def sentence_vector(sentence: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic pseudo-random direction for one normalized sentence."""
    digest = hashlib.sha256(f"{seed}|{normalize_sentence(sentence)}".encode()).digest()
    gen = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    vec = gen.standard_normal(dim)
    return vec / np.sqrt(dim)


def embedding_from_text(text: str, dim: int = DEFAULT_EMBED_DIM, seed: int = 0) -> np.ndarray:
    """Sum of per-sentence hash vectors: a signal-free stand-in for an encoder.

    The embedding is informative about exactly which sentences a report
    contains, which is the role the real signal plays for a real encoder.
    """
    total = np.zeros(dim, dtype=np.float64)
    for sentence in split_sentences(text):
        total += sentence_vector(sentence, dim, seed)
    return total


def report_embedding(
    report: Report,
    dim: int = DEFAULT_EMBED_DIM,
    seed: int = 0,
    section: str | None = None,
) -> np.ndarray:
    return embedding_from_text(report.section_text(section), dim=dim, seed=seed)
