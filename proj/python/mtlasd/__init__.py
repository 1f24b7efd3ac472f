# Copyright 2026 The mtlasd Authors.
# SPDX-License-Identifier: Apache-2.0
"""Multitask-learning anomalous sound detection."""

from mtlasd._core import (
    MtlasdError,
    arcface_loss,
    compute_auc,
    evaluate,
    fit_stats,
    log_mel,
    machine_types,
    mahalanobis,
    score,
    synth,
    train,
)

__all__ = [
    "MtlasdError",
    "arcface_loss",
    "compute_auc",
    "evaluate",
    "fit_stats",
    "log_mel",
    "machine_types",
    "mahalanobis",
    "score",
    "synth",
    "train",
]
