"""Anchor-word vocabularies, one fixed label set per modality."""

from .errors import CorpusError

XRAY_ANCHORS: tuple[str, ...] = (
    "No Finding",
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Lesion",
    "Airspace Opacity",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
)

EEG_ANCHORS: tuple[str, ...] = (
    "Normality",
    "Sleep",
    "Generalized Slowing",
    "Focal Slowing",
    "Epileptiform Discharges",
    "Drowsiness",
    "Spindles",
    "Vertex Waves",
    "Seizure",
)

MODALITIES: tuple[str, ...] = ("xray", "eeg")

# "normal study" label per modality; reports carrying it get negation sentences
NORMAL_ANCHOR = {"xray": "No Finding", "eeg": "Normality"}


def anchor_vocabulary(modality: str) -> tuple[str, ...]:
    """Return the ordered anchor label set for a modality."""
    if modality == "xray":
        return XRAY_ANCHORS
    if modality == "eeg":
        return EEG_ANCHORS
    raise CorpusError(f"unknown modality {modality!r}; expected one of {MODALITIES}")


def validate_anchors(modality: str, labels) -> tuple[str, ...]:
    """Check labels against the modality vocabulary, preserving order, dropping dups."""
    vocab = anchor_vocabulary(modality)
    seen: list[str] = []
    for label in labels:
        if label not in vocab:
            raise CorpusError(f"unknown anchor {label!r} for modality {modality!r}")
        if label not in seen:
            seen.append(label)
    return tuple(seen)
