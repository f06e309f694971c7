"""Python access to the pltts core and commands."""

import json

from . import _core
from ._core import (
    ShapeError,
    UnknownCharacterError,
    charset,
    compare_trajectories,
    dtw_align,
    encode_text,
    estimate_f0,
    evaluate,
    griffin_lim,
    load_wav,
    log_mel,
    normalize_text,
    save_wav,
    score_pair,
    synthesize,
)

__all__ = [
    "ShapeError",
    "UnknownCharacterError",
    "charset",
    "compare_trajectories",
    "config_hash",
    "dtw_align",
    "encode_text",
    "estimate_f0",
    "evaluate",
    "gen_corpus",
    "griffin_lim",
    "load_wav",
    "log_mel",
    "normalize_text",
    "resolve_config",
    "save_wav",
    "score_pair",
    "synthesize",
    "train_ser",
    "train_tts",
]


def _dump(overrides):
    return json.dumps(overrides) if overrides else ""


def resolve_config(profile="desk", overrides=None):
    """Profile defaults with `overrides` merged on top, as a dict."""
    return json.loads(_core.resolve_config(profile, _dump(overrides)))


def config_hash(profile="desk", overrides=None):
    return _core.config_hash(profile, _dump(overrides))


def gen_corpus(kind, out_dir, seed=1, overrides=None, force=False):
    return _core.gen_corpus(kind, str(out_dir), seed, _dump(overrides), force)


def train_ser(corpus, out_dir, profile="desk", overrides=None):
    return _core.train_ser(profile, _dump(overrides), str(corpus), str(out_dir))


def train_tts(corpus, out_dir, profile="desk", overrides=None):
    return _core.train_tts(profile, _dump(overrides), str(corpus), str(out_dir))
