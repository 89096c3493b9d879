"""Per-anchor positive-unlabeled clone detection.

Thin Python layer over the C++ core. Config objects are plain dicts using
the same keys as the CLI's JSON config files.
"""

import json

from ._core import (
    AnchorModel,
    Corpus,
    NumericalError,
    __version__,
    auprc,
    auroc,
    best_f1,
    calibration_sweep,
    load_anchor_model,
    load_cifar10_bin,
    load_image_dir,
    load_store,
    make_clones,
    prf1,
    pu_loss,
    save_store,
    score_corpus,
    top_k,
    write_synthetic_cifar,
)
from . import _core


def train_anchor(corpus, anchor, config=None):
    """Train one anchor model. `config` is a partial TrainConfig dict."""
    return _core._train_anchor(corpus, anchor, json.dumps(config) if config else "")


def run_trial(corpus, anchor, spec=None):
    """Train and evaluate one anchor; returns the metrics as a dict."""
    spec = dict(spec or {})
    spec["anchor_id"] = anchor
    return json.loads(_core._run_trial(corpus, json.dumps(spec)))


def run_benchmark(corpus, n_anchors, spec=None, jobs=1, seed=0):
    """Seeded multi-anchor benchmark; returns the report as a dict."""
    return json.loads(_core._run_benchmark(corpus, n_anchors, json.dumps(spec or {}), jobs, seed))


__all__ = [
    "AnchorModel",
    "Corpus",
    "NumericalError",
    "__version__",
    "auprc",
    "auroc",
    "best_f1",
    "calibration_sweep",
    "load_anchor_model",
    "load_cifar10_bin",
    "load_image_dir",
    "load_store",
    "make_clones",
    "prf1",
    "pu_loss",
    "run_benchmark",
    "run_trial",
    "save_store",
    "score_corpus",
    "top_k",
    "train_anchor",
    "write_synthetic_cifar",
]
