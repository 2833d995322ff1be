"""Toy seq2seq fine-tuning over instruction-dataset files.

Everything enters and leaves through file formats: the dataset JSONL,
the vocabulary manifest with its binary embedding matrix, and the
predictions JSONL.  Inputs are treated as opaque text; node tokens are
ordinary vocabulary entries whose embeddings come from the manifest's
feature rows through a trainable projection.
"""

from .errors import AdapterError
from .io import (
    DatasetRecord,
    VocabManifest,
    read_dataset,
    read_glmf,
    read_manifest,
    write_predictions,
)
from .model import PooledSeq2Seq
from .tokenizer import BOS_ID, EOS_ID, NODE_BASE, PAD_ID, UNK_ID, Tokenizer
from .train import (
    MODEL_SIZES,
    AdapterConfig,
    Checkpoint,
    finetune,
    initialize,
    predict,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "BOS_ID",
    "Checkpoint",
    "DatasetRecord",
    "EOS_ID",
    "MODEL_SIZES",
    "NODE_BASE",
    "PAD_ID",
    "PooledSeq2Seq",
    "Tokenizer",
    "UNK_ID",
    "VocabManifest",
    "finetune",
    "initialize",
    "predict",
    "read_dataset",
    "read_glmf",
    "read_manifest",
    "write_predictions",
    "__version__",
]
