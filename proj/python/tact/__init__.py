"""Offline policy-gradient learning of goal-oriented dialog agents."""

from ._tact import (
    corpus_stats,
    evaluate,
    gradcheck,
    load_dialogs,
    normalize_run_config,
    sentence_bleu,
    train,
    write_synth,
)

__all__ = [
    "corpus_stats",
    "evaluate",
    "gradcheck",
    "load_dialogs",
    "normalize_run_config",
    "sentence_bleu",
    "train",
    "write_synth",
]
