"""Watermark message coding, symmetric Gaussian sampling and detection thresholds.

Bit sequences are 1-D ``uint8`` numpy arrays of 0/1.  Functions that work on
codewords also accept stacked batches ``(..., n)``.
"""
from __future__ import annotations

import hashlib
import json
import math
import secrets
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms
from scipy import special, stats

from .codec import DEFAULT_SHAPE, flatten, unflatten
from .errors import IndivisibleCapacity, InvalidAlpha, LengthMismatch

DEFAULT_MESSAGE_BITS = 24
DEFAULT_TAU = 0.7916
DEFAULT_ALPHA0 = 1e-3
CAPACITIES = (12, 16, 24, 32, 48)


def as_bits(bits) -> np.ndarray:
    """Coerce a 0/1 sequence or a string like ``"0110"`` to a uint8 array."""
    if isinstance(bits, str):
        bits = [int(ch) for ch in bits.strip()]
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.size and arr.max() > 1:
        raise ValueError("bits must be 0 or 1")
    return arr


def bits_to_str(bits) -> str:
    return "".join(str(int(b)) for b in np.asarray(bits).ravel())


@dataclass(frozen=True, eq=False)
class WatermarkKey:
    message: np.ndarray
    cipher_key: bytes
    nonce: bytes
    gauss_seed: int

    def __post_init__(self):
        msg = as_bits(self.message).copy()
        msg.setflags(write=False)
        object.__setattr__(self, "message", msg)
        if msg.size == 0:
            raise ValueError("message must contain at least one bit")
        if len(self.cipher_key) != 32:
            raise ValueError("cipher_key must be 32 bytes")
        if len(self.nonce) != 12:
            raise ValueError("nonce must be 12 bytes")
        if not 0 <= int(self.gauss_seed) < 2**64:
            raise ValueError("gauss_seed must be an unsigned 64-bit integer")

    @property
    def k(self) -> int:
        return int(self.message.size)

    @classmethod
    def generate(cls, k: int = DEFAULT_MESSAGE_BITS, seed: int | None = None) -> "WatermarkKey":
        """Fresh random key; pass ``seed`` for a reproducible one."""
        if seed is None:
            raw = secrets.token_bytes(32 + 12 + 8 + k)
        else:
            raw = _expand(b"qtag-keygen", seed, 32 + 12 + 8 + k)
        return cls(
            message=np.frombuffer(raw[52:52 + k], dtype=np.uint8) & 1,
            cipher_key=raw[:32],
            nonce=raw[32:44],
            gauss_seed=int.from_bytes(raw[44:52], "little"),
        )

    def with_gauss_seed(self, gauss_seed: int) -> "WatermarkKey":
        return WatermarkKey(self.message, self.cipher_key, self.nonce, gauss_seed)

    def to_dict(self) -> dict:
        return {
            "cipher_key": self.cipher_key.hex(),
            "nonce": self.nonce.hex(),
            "gauss_seed": str(int(self.gauss_seed)),
            "message": bits_to_str(self.message),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WatermarkKey":
        return cls(
            message=as_bits(d["message"]),
            cipher_key=bytes.fromhex(d["cipher_key"]),
            nonce=bytes.fromhex(d["nonce"]),
            gauss_seed=int(d["gauss_seed"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "WatermarkKey":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def __eq__(self, other):
        if not isinstance(other, WatermarkKey):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(tuple(self.to_dict().values()))


def _expand(label: bytes, seed: int, nbytes: int) -> bytes:
    key = hashlib.sha256(label + int(seed).to_bytes(16, "little", signed=True)).digest()
    return chacha20_stream(key, bytes(12), nbytes)


def derive_seed(master_seed: int, *parts) -> int:
    """64-bit seed ``hash(master_seed, *parts)``; parts may be ints or strings."""
    text = ":".join([str(int(master_seed))] + [str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


# ------------------------------------------------------------------- keystream

def chacha20_stream(key: bytes, nonce: bytes, nbytes: int, counter: int = 0) -> bytes:
    """Raw ChaCha20 (RFC 8439) keystream bytes starting at block ``counter``."""
    full_nonce = counter.to_bytes(4, "little") + nonce
    enc = Cipher(algorithms.ChaCha20(key, full_nonce), mode=None).encryptor()
    return enc.update(bytes(nbytes))


_cached_stream = lru_cache(maxsize=256)(chacha20_stream)


def keystream(key: WatermarkKey, length: int, counter: int = 0) -> np.ndarray:
    """First ``length`` keystream bits, each byte expanded MSB first."""
    if length < 1:
        raise ValueError("length must be >= 1")
    raw = _cached_stream(key.cipher_key, key.nonce, (length + 7) // 8, counter)
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:length]
    bits.setflags(write=False)
    return bits


# ------------------------------------------------------------------------ ECC

def repetition_factor(k: int, n: int) -> int:
    if k < 1 or n % k:
        raise IndivisibleCapacity(f"message length {k} does not divide codeword length {n}")
    return n // k


def ecc_encode(m, key: WatermarkKey, n: int) -> np.ndarray:
    """Repeat each bit ``v = n/k`` times contiguously, then XOR with the keystream."""
    m = as_bits(m)
    v = repetition_factor(m.size, n)
    return np.repeat(m, v) ^ keystream(key, n)


def ecc_decode(s, key: WatermarkKey, k: int, valid=None) -> np.ndarray:
    """De-XOR and majority-vote each block; a tied block decodes to 0.

    ``valid`` (same shape as ``s``) marks positions that take part in the
    vote; the rest are treated as erasures.  ``None`` means every position votes.
    """
    s = as_bits(s)
    n = s.shape[-1]
    v = repetition_factor(k, n)
    plain = s ^ keystream(key, n)
    blocks = s.shape[:-1] + (k, v)
    if valid is None:
        ones = plain.reshape(blocks).sum(axis=-1, dtype=np.int64)
        return (2 * ones > v).astype(np.uint8)
    valid = np.broadcast_to(np.asarray(valid, dtype=bool), s.shape).reshape(blocks)
    ones = (plain.reshape(blocks).astype(bool) & valid).sum(axis=-1, dtype=np.int64)
    return (2 * ones > valid.sum(axis=-1, dtype=np.int64)).astype(np.uint8)


# ------------------------------------------------------------ symmetric sampling

def gaussian_draws(seed: int, count: int) -> np.ndarray:
    """Standard normals by Box-Muller over uniforms taken from a seeded ChaCha20 stream."""
    pairs = (count + 1) // 2
    key = hashlib.sha256(b"qtag-gauss" + int(seed).to_bytes(8, "little")).digest()
    raw = chacha20_stream(key, bytes(12), 16 * pairs)
    words = np.frombuffer(raw, dtype="<u8").reshape(pairs, 2)
    # 53-bit uniforms in the open interval (0, 1)
    u = ((words >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53
    r = np.sqrt(-2.0 * np.log(u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.column_stack([r * np.cos(theta), r * np.sin(theta)]).ravel()
    return z[:count]


def ssm_apply(bits, draws: np.ndarray) -> np.ndarray:
    """Keep each draw if its half-line matches its bit (0: negative, 1: non-negative), else negate."""
    bits = as_bits(bits)
    draws = np.asarray(draws, dtype=float)
    if bits.shape != draws.shape:
        raise LengthMismatch(f"{bits.shape} bits vs {draws.shape} draws")
    in_part = (draws >= 0) == (bits == 1)
    return np.where(in_part, draws, -draws)


def ssm_sample(s_en, key: WatermarkKey, shape=DEFAULT_SHAPE) -> np.ndarray:
    """Starting latent whose sign pattern carries ``s_en`` and whose entries are N(0, 1)."""
    s_en = as_bits(s_en)
    n = int(np.prod(shape))
    if s_en.shape != (n,):
        raise LengthMismatch(f"codeword length {s_en.size} != latent size {n}")
    return unflatten(ssm_apply(s_en, gaussian_draws(key.gauss_seed, n)), shape)


def reverse_sample(z: np.ndarray) -> np.ndarray:
    """Bits of a latent in flatten order: 0 for negative entries, 1 otherwise."""
    return (flatten(z) >= 0).astype(np.uint8)


def similarity(a, b) -> float:
    a, b = as_bits(a), as_bits(b)
    if a.shape != b.shape:
        raise LengthMismatch(f"{a.shape} vs {b.shape}")
    return float(np.mean(a == b))


# ------------------------------------------------------------------ thresholds

def fpr_binomial_exact(tau_bits: int, k: int) -> Fraction:
    """``P(X > tau_bits)`` for ``X ~ Binomial(k, 1/2)`` as an exact fraction."""
    if not 0 <= tau_bits <= k:
        raise ValueError(f"tau_bits must lie in [0, {k}]")
    return Fraction(sum(math.comb(k, i) for i in range(tau_bits + 1, k + 1)), 2**k)


def fpr_binomial(tau_bits: int, k: int) -> float:
    return float(fpr_binomial_exact(tau_bits, k))


def fpr_incomplete_beta(tau_bits: int, k: int) -> float:
    """Same tail via the regularized incomplete beta function ``I_{1/2}(tau+1, k-tau)``."""
    if not 0 <= tau_bits <= k:
        raise ValueError(f"tau_bits must lie in [0, {k}]")
    if tau_bits == k:
        return 0.0
    return float(special.betainc(tau_bits + 1, k - tau_bits, 0.5))


def minimal_tau_bits(k: int, alpha0: float = DEFAULT_ALPHA0) -> int:
    """Smallest ``tau_bits`` with ``fpr_binomial(tau_bits, k) <= alpha0``."""
    for t in range(k + 1):
        if fpr_binomial(t, k) <= alpha0:
            return t
    return k


@dataclass(frozen=True)
class CalibrationResult:
    mu0: float
    sigma0: float
    th: float
    mu1: float = float("nan")
    sigma1: float = float("nan")
    alpha0: float = DEFAULT_ALPHA0


def np_calibrate(mu0: float, sigma0: float, alpha0: float = DEFAULT_ALPHA0,
                 mu1: float = float("nan"), sigma1: float = float("nan")) -> CalibrationResult:
    """Neyman-Pearson threshold: the point whose upper H0 Gaussian tail mass is ``alpha0``."""
    if not 0.0 < alpha0 < 1.0:
        raise InvalidAlpha(f"alpha0 must be in (0, 1), got {alpha0}")
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive")
    th = mu0 + sigma0 * stats.norm.isf(alpha0)
    return CalibrationResult(mu0=mu0, sigma0=sigma0, th=float(th), mu1=mu1, sigma1=sigma1, alpha0=alpha0)


@dataclass(frozen=True)
class DetectionPolicy:
    """Accept when the message similarity is at least ``tau``."""

    k: int = DEFAULT_MESSAGE_BITS
    n: int = 4 * 8 * 48
    tau: float = DEFAULT_TAU
    alpha0: float = DEFAULT_ALPHA0
    accept_rule: str = field(default="similarity >= tau", compare=False)

    def __post_init__(self):
        repetition_factor(self.k, self.n)
        if not (self.k / 2 < self.tau * self.k <= self.k):
            raise ValueError(f"tau*k = {self.tau * self.k} outside ({self.k / 2}, {self.k}]")

    @property
    def v(self) -> int:
        return self.n // self.k

    @property
    def tau_bits(self) -> int:
        """Fewest matching bits that pass the accept rule."""
        return math.ceil(self.tau * self.k - 1e-9)

    def accepts(self, sim: float) -> bool:
        return sim >= self.tau

    @classmethod
    def for_capacity(cls, k: int, n: int = 4 * 8 * 48, alpha0: float = DEFAULT_ALPHA0) -> "DetectionPolicy":
        """Policy whose threshold is the minimal bit count meeting ``alpha0``."""
        return cls(k=k, n=n, tau=minimal_tau_bits(k, alpha0) / k, alpha0=alpha0)
