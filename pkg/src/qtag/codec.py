"""Circuit <-> latent codec built on a 16-entry sign-pattern codebook.

Token ``t`` maps to the ``f_c``-vector whose channel ``c`` is ``+a`` when bit
``c`` of ``t`` is set and ``-a`` otherwise, so nearest-codeword decoding is a
per-channel sign test.  With the default ``f_c = 4`` this is a bijection onto
the 16 gate tokens.

Latents are float arrays of shape ``(f_c, f_h, f_w)``.  The flat (codeword)
order puts the channel fastest, then the qubit row, then the column.
"""
from __future__ import annotations

import struct
from typing import NamedTuple

import numpy as np

from .circuit import Circuit, Gate, incomplete_group_mask
from .errors import LatentFormatError, ShapeMismatch

DEFAULT_SHAPE = (4, 8, 48)
AMPLITUDE = 1.0

_MAGIC = b"QTAG"
_VERSION = 1


def codebook(num_channels: int = 4, amplitude: float = AMPLITUDE) -> np.ndarray:
    """``(16, num_channels)`` array of codewords indexed by token id."""
    tokens = np.arange(16)[:, None]
    bits = (tokens >> np.arange(num_channels)[None, :]) & 1
    return np.where(bits == 1, amplitude, -amplitude).astype(float)


def flatten(z: np.ndarray) -> np.ndarray:
    """Latent(s) ``(..., f_c, f_h, f_w)`` -> codeword-order vectors ``(..., n)``."""
    z = np.asarray(z)
    lead = z.shape[:-3]
    return np.swapaxes(z, -1, -3).reshape(lead + (-1,))


def unflatten(v: np.ndarray, shape=DEFAULT_SHAPE) -> np.ndarray:
    v = np.asarray(v)
    fc, fh, fw = shape
    if v.shape[-1] != fc * fh * fw:
        raise ShapeMismatch(f"vector length {v.shape[-1]} != {fc}*{fh}*{fw}")
    return np.swapaxes(v.reshape(v.shape[:-1] + (fw, fh, fc)), -1, -3)


def flat_index(ch: int, row: int, col: int, shape=DEFAULT_SHAPE) -> int:
    fc, fh, _ = shape
    return col * fh * fc + row * fc + ch


class Encoded(NamedTuple):
    latent: np.ndarray
    truncated: bool


def encode_circuit(c: Circuit, shape=DEFAULT_SHAPE) -> Encoded:
    """Map a circuit to its latent; columns past ``f_w`` are dropped and flagged."""
    fc, fh, fw = shape
    if c.num_qubits != fh:
        raise ShapeMismatch(f"circuit has {c.num_qubits} qubits, latent expects {fh}")
    tokens = np.zeros((fh, fw), dtype=np.int64)
    width = min(c.num_columns, fw)
    tokens[:, :width] = c.grid[:, :width]
    z = codebook(fc)[tokens]                   # (fh, fw, fc)
    return Encoded(np.ascontiguousarray(np.moveaxis(z, -1, 0)), c.num_columns > fw)


def decode_tokens(z: np.ndarray) -> np.ndarray:
    """Sign-pattern tokens with partner repair; works on batches ``(..., f_c, f_h, f_w)``."""
    z = np.asarray(z)
    fc = z.shape[-3]
    if fc > 4:
        raise ShapeMismatch("more than 4 channels cannot map onto 16 tokens")
    weights = (1 << np.arange(fc)).reshape((fc, 1, 1))
    tokens = ((z >= 0).astype(np.int64) * weights).sum(axis=-3)
    tokens[incomplete_group_mask(tokens)] = Gate.IDENT
    return tokens.astype(np.int8)


def informative_positions(z: np.ndarray) -> np.ndarray:
    """Flattened mask of entries whose sign can carry information after a circuit round trip.

    A cell decoding to IDENT may be a repaired partner token, and an all-zero
    cell is padding; both kinds of cell are masked out.  Works on batches.
    """
    z = np.asarray(z)
    erased = (z < 0).all(axis=-3) | (z == 0).all(axis=-3)
    return flatten(np.broadcast_to(~erased[..., None, :, :], z.shape))


def decode_latent(z: np.ndarray) -> Circuit:
    z = np.asarray(z)
    if z.ndim != 3:
        raise ShapeMismatch(f"expected (f_c, f_h, f_w), got {z.shape}")
    return Circuit(decode_tokens(z))


def save_latent(path, z: np.ndarray) -> None:
    z = np.asarray(z)
    if z.ndim != 3:
        raise ShapeMismatch(f"expected rank-3 latent, got shape {z.shape}")
    header = _MAGIC + struct.pack("<II3I", _VERSION, 3, *z.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(flatten(z).astype("<f4").tobytes())


def load_latent(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise LatentFormatError("bad magic, not a QTAG latent file")
    version, rank = struct.unpack_from("<II", data, 4)
    if version != _VERSION or rank != 3:
        raise LatentFormatError(f"unsupported version {version} / rank {rank}")
    shape = struct.unpack_from("<3I", data, 12)
    n = int(np.prod(shape))
    body = data[24:]
    if len(body) != 4 * n:
        raise LatentFormatError(f"expected {n} float32 values, found {len(body) // 4}")
    return unflatten(np.frombuffer(body, dtype="<f4").astype(float), shape)
