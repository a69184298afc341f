"""Bit-packed boolean row matrices.

Neighborhood and adjacency matrices are stored as uint8 arrays with 8
boolean entries per byte (numpy's big-endian bit order: bit j of a row
lives in byte j // 8 at position 7 - j % 8). Packing keeps an N x N
boolean matrix at N*ceil(N/8) bytes, which is what lets the fused
kernels run at the 60k-point scale where the float matrix cannot.
"""

import numpy as np


def row_bytes(n: int) -> int:
    """Bytes per packed row of n boolean entries."""
    return (n + 7) // 8


def pack_rows(block: np.ndarray) -> np.ndarray:
    """Pack a 2-D boolean block into uint8 rows."""
    return np.packbits(block, axis=-1)


def unpack_rows(packed: np.ndarray, n: int) -> np.ndarray:
    """Unpack uint8 rows back to a 2-D boolean block of width n."""
    return np.unpackbits(packed, axis=-1, count=n).view(bool)


def unpack_row(packed_row: np.ndarray, n: int) -> np.ndarray:
    """Unpack a single packed row to an n-long boolean vector."""
    return np.unpackbits(packed_row, count=n).view(bool)


def get_bit(packed_row: np.ndarray, j: int) -> bool:
    """Read bit j of one packed row."""
    return bool((packed_row[j >> 3] >> (7 - (j & 7))) & 1)


def column_bits(packed: np.ndarray, j: int) -> np.ndarray:
    """Read column j across all packed rows as a boolean vector."""
    return ((packed[:, j >> 3] >> (7 - (j & 7))) & 1).astype(bool)


def popcount_rows(packed: np.ndarray) -> np.ndarray:
    """Number of set bits per packed row."""
    return np.bitwise_count(packed).sum(axis=-1, dtype=np.int64)


def popcount(packed_row: np.ndarray) -> int:
    """Number of set bits in one packed row."""
    return int(np.bitwise_count(packed_row).sum(dtype=np.int64))
