"""Recurrent-network tagger for protected health information in clinical notes."""

__version__ = "0.1.0"

from .config import Config, load_config  # noqa: E402
from .corpus import Dataset, LabeledSequence, LabelSet, Token, read_token_file, tokenize, write_token_file  # noqa: E402
from .errors import CheckpointError, DeidError, ParseError, SpanConflictError, TrainingDiverged, UnknownLabelError  # noqa: E402

__all__ = [
    "Config", "load_config", "Dataset", "LabeledSequence", "LabelSet", "Token",
    "read_token_file", "tokenize", "write_token_file", "CheckpointError", "DeidError",
    "ParseError", "SpanConflictError", "TrainingDiverged", "UnknownLabelError",
]
