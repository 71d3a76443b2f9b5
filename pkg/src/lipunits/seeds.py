"""Labeled sub-streams of a master seed.

Each pipeline stage draws randomness from its own named stream, so adding or
reordering stages never perturbs the draws of existing ones and a fixed
master seed reproduces every artifact byte for byte.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_key(label: str) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def substream(master: int, label: str) -> np.random.Generator:
    """A generator for one named stage of a run."""
    return np.random.default_rng(np.random.SeedSequence([master, _label_key(label)]))


def derive_seed(master: int, label: str) -> int:
    """A plain integer seed for APIs that take one."""
    return int(substream(master, label).integers(2**63))
