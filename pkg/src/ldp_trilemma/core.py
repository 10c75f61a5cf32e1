"""Sylvester-Hadamard primitives, the fast Walsh-Hadamard transform and
bit-level message packing shared by every protocol in the package."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def log2_exact(n: int) -> int:
    """log2 of a power of two; raises for anything else."""
    if not is_power_of_two(n):
        raise ValueError(f"{n} is not a power of two")
    return n.bit_length() - 1


def ceil_log2(n: int) -> int:
    """Number of bits needed to index ``n`` values (0 for n == 1)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return (n - 1).bit_length()


def next_power_of_two(n: int) -> int:
    return 1 << ceil_log2(n)


def popcount(a):
    """Vectorised popcount for non-negative integers or integer arrays."""
    if np.isscalar(a):
        return int(a).bit_count()
    return np.bitwise_count(np.asarray(a, dtype=np.uint64)).astype(np.int64)


@dataclass(frozen=True)
class HadamardIndex:
    row: int
    col: int
    order: int

    def __post_init__(self):
        log2_exact(self.order)
        if not (0 <= self.row < self.order and 0 <= self.col < self.order):
            raise ValueError(
                f"index ({self.row}, {self.col}) out of range for order {self.order}"
            )

    @property
    def sign(self) -> int:
        return -1 if popcount(self.row & self.col) & 1 else 1


def hadamard_entry(row, col, order: int):
    """Entry ``(row, col)`` of the Sylvester matrix H_order, 0-based.

    Equals ``(-1) ** popcount(row & col)``. Accepts integer arrays for
    ``row``/``col`` (broadcast) and then returns an int8 array.
    """
    log2_exact(order)
    if np.isscalar(row) and np.isscalar(col):
        return HadamardIndex(int(row), int(col), order).sign
    row = np.asarray(row, dtype=np.int64)
    col = np.asarray(col, dtype=np.int64)
    if (row < 0).any() or (row >= order).any() or (col < 0).any() or (col >= order).any():
        raise ValueError(f"index out of range for order {order}")
    parity = popcount(np.bitwise_and(row, col)) & 1
    return (1 - 2 * parity).astype(np.int8)


def hadamard_matrix(order: int) -> np.ndarray:
    """Dense H_order built from :func:`hadamard_entry` (small orders only)."""
    idx = np.arange(order)
    return hadamard_entry(idx[:, None], idx[None, :], order).astype(np.float64)


def fwht(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unnormalised fast Walsh-Hadamard transform, ``H_d @ v`` along ``axis``.

    Runs ``log2(d)`` in-place butterfly stages. A batch stacked along the
    other axes is transformed together, with the batch as the fast axis.
    """
    x = np.moveaxis(np.asarray(v, dtype=np.float64), axis, -1)
    d = x.shape[-1]
    log2_exact(d)
    lead = x.shape[:-1]
    # always a fresh C-ordered copy: the butterflies below work in place
    x = x.reshape(-1, d).T.copy()
    width = x.shape[1]
    h = 1
    while h < d:
        y = x.reshape(d // (2 * h), 2, h * width)
        a, b = y[:, 0], y[:, 1]
        t = a.copy()
        a += b
        np.subtract(t, b, out=b)
        h *= 2
    return np.moveaxis(np.ascontiguousarray(x.T).reshape(*lead, d), -1, axis)


# --- bit packing -----------------------------------------------------------


@dataclass(frozen=True)
class BitPayload:
    """An ordered run of ``length`` bits stored as an integer (MSB first)."""

    value: int
    length: int

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("negative payload length")
        if self.value < 0 or self.value >> self.length:
            raise ValueError(f"value {self.value} does not fit in {self.length} bits")

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.value >> (self.length - 1 - i)) & 1 for i in range(self.length))

    @classmethod
    def from_bits(cls, bits) -> "BitPayload":
        value = 0
        for bit in bits:
            if bit not in (0, 1):
                raise ValueError("bits must be 0 or 1")
            value = (value << 1) | bit
        return cls(value, len(bits))

    def packed(self) -> bytes:
        """Big-endian bytes, zero-padded on the right to a whole byte."""
        nbytes = (self.length + 7) // 8
        pad = 8 * nbytes - self.length
        return (self.value << pad).to_bytes(nbytes, "big")

    @classmethod
    def unpacked(cls, data: bytes, length: int) -> "BitPayload":
        nbytes = (length + 7) // 8
        if len(data) < nbytes:
            raise ValueError("truncated payload")
        pad = 8 * nbytes - length
        raw = int.from_bytes(data[:nbytes], "big")
        if raw & ((1 << pad) - 1):
            raise ValueError("nonzero padding bits")
        return cls(raw >> pad, length)

    def to_bytes(self) -> bytes:
        """Harness wire form: one length byte followed by the packed bits."""
        if self.length > 255:
            raise ValueError("payload too long for a one-byte length header")
        return bytes([self.length]) + self.packed()

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitPayload":
        if not data:
            raise ValueError("empty buffer")
        return cls.unpacked(data[1:], data[0])


def pack_value(sign_bit, loc, k: int):
    """Integer form of the (sign, loc) message: sign on top, loc below it.

    Works elementwise on arrays; ``sign_bit`` is 1 for +1 and 0 for -1.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    loc_arr = np.asarray(loc, dtype=np.int64)
    if (loc_arr < 0).any() or (loc_arr >> (k - 1)).any():
        raise ValueError(f"loc does not fit in {k - 1} bits")
    if np.isscalar(loc) and np.isscalar(sign_bit):
        return (int(sign_bit) << (k - 1)) | int(loc)
    return (np.asarray(sign_bit, dtype=np.int64) << (k - 1)) | loc_arr


def unpack_value(value, k: int):
    """Inverse of :func:`pack_value`; returns ``(sign_bit, loc)``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    mask = (1 << (k - 1)) - 1
    if np.isscalar(value):
        return (int(value) >> (k - 1)) & 1, int(value) & mask
    value = np.asarray(value)
    return (value >> (k - 1)) & 1, value & mask


def pack_message(sign: int, loc: int, k: int) -> BitPayload:
    """Pack a signed location into exactly ``k`` bits.

    ``sign`` may be given as +1/-1 or as the raw bit (1 for +, 0 for -).
    For ``k == 1`` the location field is empty and ``loc`` must be 0.
    """
    sign_bit = 1 if sign in (1, True) else 0 if sign in (-1, 0) else None
    if sign_bit is None:
        raise ValueError(f"bad sign {sign!r}")
    return BitPayload(pack_value(sign_bit, int(loc), k), k)


def unpack_message(payload: BitPayload, k: int) -> tuple[int, int]:
    """Returns ``(sign_bit, loc)`` from a ``k``-bit payload."""
    if payload.length != k:
        raise ValueError(f"expected {k} bits, got {payload.length}")
    return unpack_value(payload.value, k)
