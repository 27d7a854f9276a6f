"""Interactive clinical-report auto-completion.

Retrieval over a weighted prototype-sentence index proposes the next
sentence; a conditioned sequence editor rewrites it to match the study's
input embedding, the accepted context, and any typed prefix.
"""

from .anchors import EEG_ANCHORS, XRAY_ANCHORS, anchor_vocabulary
from .corpus import (
    Report,
    Vocabulary,
    build_vocabulary,
    load_corpus,
    split_sentences,
    tokenize,
    write_corpus,
)
from .editor import EditInput, EditorParams, decode_sentence, edit_sentence, encode_template, train_editor
from .encoder import (
    AnchorClassifier,
    EncoderParams,
    RecordingInput,
    encode_epoch,
    encode_recording,
    predict_anchor_words,
    read_recording,
    train_anchor_classifier,
    write_recording,
)
from .errors import ClaraError
from .metrics import EvalPair, bleu, cider, pr_auc
from .phenotype import PhenotypeClassifier, phenotype_eval, train_phenotype
from .pipeline import (
    GenerationConfig,
    ModelBundle,
    TrainSettings,
    anchor_sweep,
    evaluate_split,
    generate_report,
    split_corpus,
    train_bundle,
)
from .prototype import (
    InvertedIndex,
    PrototypeEntry,
    Query,
    Repository,
    build_repository,
    idf,
    make_query,
    retrieve,
    score,
)
from .synth import embedding_from_text, report_embedding, synth_corpus

__version__ = "0.1.0"
