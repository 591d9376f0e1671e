# Copyright 2026 The memoe-lab Authors
# SPDX-License-Identifier: Apache-2.0
"""Mixture-of-experts bypass adapters for model editing."""

from memoe._core import (
    average,
    consistency,
    gate_from_logits,
    generate_corpus,
    load_balance_loss,
    run_cli,
    spherical_kmeans,
)

__all__ = [
    "average",
    "consistency",
    "gate_from_logits",
    "generate_corpus",
    "load_balance_loss",
    "run_cli",
    "spherical_kmeans",
]
__version__ = "0.1.0"
