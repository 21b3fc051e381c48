"""Temporal ensembling of overlapping action chunks.

At step t every buffered chunk that covers t contributes its prediction for
t, weighted by exp(-decay * i) where i counts recency (i = 0 is the newest
chunk, which therefore carries the highest weight). Weights are renormalized
over whichever chunks actually cover the step, so the result is always a
convex combination of the contributing predictions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ChunkBuffer:
    """Most-recent-first store of emitted chunks, capacity k."""

    k: int  # chunk length (actions per chunk)
    decay: float = 0.01  # exponential recency decay m >= 0
    entries: list[tuple[int, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"chunk length k must be >= 1, got {self.k}")
        if self.decay < 0.0:
            raise ValueError(f"decay must be non-negative, got {self.decay}")


def push(buffer: ChunkBuffer, chunk: np.ndarray, step: int) -> None:
    """Insert a chunk emitted at `step`; evict chunks k or more steps old."""
    chunk = np.asarray(chunk, dtype=np.float64)
    if chunk.ndim != 2 or chunk.shape[0] != buffer.k:
        raise ValueError(f"chunk must have shape ({buffer.k}, d), got {chunk.shape}")
    buffer.entries.insert(0, (int(step), chunk))
    buffer.entries = [(e, c) for (e, c) in buffer.entries if step - e < buffer.k]
    del buffer.entries[buffer.k :]


def ensemble(buffer: ChunkBuffer, step: int) -> np.ndarray:
    """Exponentially weighted average of every buffered prediction for `step`."""
    preds = []
    for emitted, chunk in buffer.entries:  # newest first
        offset = step - emitted
        if 0 <= offset < buffer.k:
            preds.append(chunk[offset])
    if not preds:
        raise ValueError(f"no buffered chunk covers step {step}")
    weights = np.exp(-buffer.decay * np.arange(len(preds), dtype=np.float64))
    weights /= weights.sum()
    return weights @ np.asarray(preds)
