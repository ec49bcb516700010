"""Additive attention masks derived from parity-check matrices.

Masked positions carry -inf so that softmax assigns them weight exactly 0;
unmasked positions carry 0. Cross-attention decoders use the PCM and its
transpose directly; self-attention decoders use the depth-2 connectivity mask.
"""

from __future__ import annotations

import numpy as np

from .gf2 import BinaryMatrix

NEG_INF = -np.inf

__all__ = [
    "NEG_INF",
    "MaskMatrix",
    "mask_from_binary",
    "build_crossmpt_masks",
    "build_ecct_mask",
    "build_fully_masked_ecct_mask",
]


class MaskMatrix:
    """Additive attention mask: 0 where attention is allowed, -inf where not."""

    __slots__ = ("additive", "support")

    def __init__(self, support: np.ndarray) -> None:
        support = np.asarray(support, dtype=bool)
        if support.ndim != 2:
            raise ValueError("MaskMatrix requires a 2-D support array")
        additive = np.where(support, 0.0, NEG_INF)
        additive.setflags(write=False)
        support = support.copy()
        support.setflags(write=False)
        self.additive = additive
        self.support = support

    @property
    def rows(self) -> int:
        return self.support.shape[0]

    @property
    def cols(self) -> int:
        return self.support.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.support.shape

    def unmasked_count(self) -> int:
        return int(self.support.sum())

    @property
    def density(self) -> float:
        """Fraction of unmasked entries."""
        return self.unmasked_count() / self.support.size

    def __repr__(self) -> str:
        return f"MaskMatrix({self.rows}x{self.cols}, density={self.density:.4f})"


def mask_from_binary(m: BinaryMatrix) -> MaskMatrix:
    """Entrywise mask: 0 where the matrix has a 1, -inf where it has a 0."""
    return MaskMatrix(m.bits.astype(bool))


def build_crossmpt_masks(h: BinaryMatrix) -> tuple[MaskMatrix, MaskMatrix]:
    """Masks for the two cross-attention directions of a PCM.

    Returns (mask over H^T for the magnitude-query block, mask over H for the
    syndrome-query block). Both have exactly popcount(H) unmasked entries.
    """
    return mask_from_binary(h.transpose()), mask_from_binary(h)


def build_ecct_mask(h: BinaryMatrix) -> MaskMatrix:
    """Self-attention mask over the concatenated magnitude+syndrome sequence.

    Magnitude-magnitude entries are unmasked when the two bit positions share
    at least one check row (depth-2 connectivity), magnitude-syndrome entries
    follow the PCM, syndrome-syndrome entries are unmasked only on the
    diagonal. The full diagonal is unmasked and the mask is symmetric.
    """
    m, n = h.shape
    hb = h.bits.astype(np.int64)
    mag_mag = (hb.T @ hb) > 0
    np.fill_diagonal(mag_mag, True)
    size = 2 * n - (n - m)  # == n + m
    support = np.zeros((size, size), dtype=bool)
    support[:n, :n] = mag_mag
    support[:n, n:] = hb.T.astype(bool)
    support[n:, :n] = hb.astype(bool)
    support[n:, n:] = np.eye(m, dtype=bool)
    return MaskMatrix(support)


def build_fully_masked_ecct_mask(h: BinaryMatrix) -> MaskMatrix:
    """ECCT mask with every off-diagonal magnitude-magnitude and
    syndrome-syndrome position additionally masked.

    What remains is the two PCM-defined cross blocks plus the diagonal.
    """
    m, n = h.shape
    size = n + m
    support = np.eye(size, dtype=bool)
    support[:n, n:] = h.bits.T.astype(bool)
    support[n:, :n] = h.bits.astype(bool)
    return MaskMatrix(support)
