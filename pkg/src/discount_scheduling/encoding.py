"""Integer (binary-weighted) encoding of grid discounts into QUBO bits.

A discount is ``step * sum_k w_k x_k - z_max`` with ``w_k = 2**k`` for all
but the last bit. The last weight is ``N_K - 2**(Q-1)`` so that every bit
pattern decodes to a grid index in ``[0, N_K - 1]``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidScheme, LengthMismatch
from .model import DiscountScheme


@dataclass(frozen=True)
class IntegerEncoding:
    scheme: DiscountScheme
    weights: tuple

    @property
    def n_bits(self) -> int:
        return len(self.weights)

    @property
    def step(self) -> float:
        return self.scheme.step

    @property
    def offset(self) -> float:
        return -self.scheme.z_max

    @cached_property
    def _patterns(self) -> np.ndarray:
        # all 2**Q patterns in lexicographic order (bit 0 compared first)
        return np.array(list(itertools.product((0, 1), repeat=self.n_bits)), dtype=np.int8)

    @cached_property
    def _canonical(self) -> np.ndarray:
        sums = self._patterns @ np.asarray(self.weights)
        first = np.full(self.scheme.n_categories, -1)
        for row, s in enumerate(sums):
            if first[s] < 0:
                first[s] = row
        return self._patterns[first]


def build_encoding(scheme: DiscountScheme) -> IntegerEncoding:
    n_k = scheme.n_categories
    if n_k < 2:
        raise InvalidScheme("need at least two discount categories")
    q = math.ceil(math.log2(n_k))
    weights = [2**k for k in range(q - 1)] + [n_k - 2 ** (q - 1)]
    return IntegerEncoding(scheme, tuple(weights))


def decode_index(encoding: IntegerEncoding, bits) -> np.ndarray | int:
    """Grid index for one pattern (shape ``(Q,)``) or a batch (``(..., Q)``)."""
    bits = np.asarray(bits)
    if bits.shape[-1:] != (encoding.n_bits,):
        raise LengthMismatch(f"expected {encoding.n_bits} bits, got shape {bits.shape}")
    idx = bits @ np.asarray(encoding.weights)
    return int(idx) if np.ndim(idx) == 0 else idx


def decode_bits(encoding: IntegerEncoding, bits) -> float:
    return float(encoding.scheme.values[decode_index(encoding, bits)])


def encode_index(encoding: IntegerEncoding, index) -> np.ndarray:
    """Canonical (lexicographically smallest) bits for grid indices, shape ``(..., Q)``."""
    return encoding._canonical[np.asarray(index)]


def encode_value(encoding: IntegerEncoding, z: float) -> tuple:
    return tuple(int(b) for b in encode_index(encoding, encoding.scheme.index_of(z)))
