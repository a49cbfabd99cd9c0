"""Watermark detection with synchronization restoration.

Standard extraction inverts the encoded circuit and majority-decodes the sign
pattern.  When that fails, zero columns are spliced into the latent at every
column position (and, in bidirectional mode, columns are also cut out) to
undo column shifts caused by circuit edits, and each candidate is extracted
in turn.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Circuit
from .codec import DEFAULT_SHAPE, encode_circuit, informative_positions
from .diffusion import DEFAULT_GUIDANCE, DiffusionSchedule, ddim_invert
from .errors import ConfigInvalid, ConfigMismatch
from .watermark import DetectionPolicy, WatermarkKey, bits_to_str, ecc_decode, reverse_sample

DIRECTIONS = ("insert_only", "bidirectional")
# fixed-point corrections per inversion step used by the detector
DEFAULT_INVERSION_REFINE = 1
_CHUNK = 64


@dataclass(frozen=True)
class SrmConfig:
    w_max: int = 3
    directions: str = "insert_only"
    early_stop: bool = True
    enabled: bool = True

    def __post_init__(self):
        if self.w_max < 1:
            raise ConfigInvalid("w_max must be >= 1")
        if self.directions not in DIRECTIONS:
            raise ConfigInvalid(f"directions must be one of {DIRECTIONS}")

    def candidate_count(self, f_w: int) -> int:
        """Candidates before deduplication, including the unmodified latent."""
        per_direction = (f_w + 1) * self.w_max
        return 1 + per_direction * (2 if self.directions == "bidirectional" else 1)


@dataclass(frozen=True)
class Candidate:
    direction: str      # "standard", "insert" or "delete"
    position: int = 0
    width: int = 0

    def label(self) -> str | tuple:
        return "standard" if self.direction == "standard" else (self.direction, self.position, self.width)


STANDARD = Candidate("standard")


def _insert_zero_columns(z: np.ndarray, i: int, w: int) -> np.ndarray:
    f_w = z.shape[-1]
    zeros = np.zeros(z.shape[:-1] + (w,), dtype=z.dtype)
    return np.concatenate([z[..., :i], zeros, z[..., i:]], axis=-1)[..., :f_w]


def _delete_columns(z: np.ndarray, i: int, w: int) -> np.ndarray:
    kept = np.concatenate([z[..., :i], z[..., i + w:]], axis=-1)
    pad = np.zeros(z.shape[:-1] + (z.shape[-1] - kept.shape[-1],), dtype=z.dtype)
    return np.concatenate([kept, pad], axis=-1)


def srm_candidates(z0: np.ndarray, cfg: SrmConfig = SrmConfig(),
                   dedupe: bool = True) -> tuple[list[Candidate], np.ndarray]:
    """Enumerate compensated latents: the original first, then by direction, width, position.

    Returns the candidate descriptors and the stacked latents.  With
    ``dedupe`` a candidate identical to an earlier one is skipped.
    """
    z0 = np.asarray(z0, dtype=float)
    f_w = z0.shape[-1]
    descs, lats = [STANDARD], [z0]
    seen = {z0.tobytes()}
    plans = [("insert", _insert_zero_columns)]
    if cfg.directions == "bidirectional":
        plans.append(("delete", _delete_columns))
    if cfg.enabled:
        for direction, op in plans:
            for w in range(1, cfg.w_max + 1):
                for i in range(f_w + 1):
                    cand = op(z0, i, w)
                    if dedupe:
                        key = cand.tobytes()
                        if key in seen:
                            continue
                        seen.add(key)
                    descs.append(Candidate(direction, i, w))
                    lats.append(cand)
    return descs, np.stack(lats)


@dataclass
class DetectionReport:
    detected: bool
    best_similarity: float
    best_candidate: Candidate
    extracted_message: np.ndarray
    candidates_tried: int
    truncated: bool = False

    @property
    def correct_bits(self) -> int:
        return int(round(self.best_similarity * self.extracted_message.size))

    def to_dict(self) -> dict:
        cand = self.best_candidate
        return {
            "detected": self.detected,
            "best_similarity": self.best_similarity,
            "best_candidate": "standard" if cand.direction == "standard"
            else {"direction": cand.direction, "position": cand.position, "width": cand.width},
            "extracted_message": bits_to_str(self.extracted_message),
            "candidates_tried": self.candidates_tried,
            "truncated": self.truncated,
        }


def extract_messages(latents: np.ndarray, key: WatermarkKey, k: int, backend,
                     schedule: DiffusionSchedule, guidance: float = DEFAULT_GUIDANCE,
                     refine: int = DEFAULT_INVERSION_REFINE, erasures: bool = True) -> np.ndarray:
    """Invert, reverse-sample and decode a stack of final latents to ``(batch, k)`` messages.

    With ``erasures`` the majority vote skips positions of IDENT and
    all-zero cells in ``latents``; otherwise every position votes.
    """
    z_T = ddim_invert(latents, backend, schedule, guidance, refine=refine)
    valid = informative_positions(latents) if erasures else None
    return ecc_decode(reverse_sample(z_T), key, k, valid)


def detect_watermark(q: Circuit, key: WatermarkKey, policy: DetectionPolicy, backend,
                     schedule: DiffusionSchedule, cfg: SrmConfig = SrmConfig(),
                     shape=DEFAULT_SHAPE, guidance: float = DEFAULT_GUIDANCE,
                     refine: int = DEFAULT_INVERSION_REFINE, erasures: bool = True) -> DetectionReport:
    """Decide whether ``q`` carries ``key.message``.

    Candidates are scored in enumeration order.  With ``cfg.early_stop`` the
    first accepted candidate wins; otherwise the accepted (or, failing that,
    overall) candidate with the highest similarity wins, ties going to the
    earlier one.
    """
    n = int(np.prod(shape))
    if n != policy.n or key.k != policy.k or q.num_qubits != shape[1]:
        raise ConfigMismatch(
            f"latent n={n}, policy n={policy.n}, key k={key.k}, policy k={policy.k}, "
            f"circuit qubits={q.num_qubits}, f_h={shape[1]}"
        )
    z0, truncated = encode_circuit(q, shape)
    descs, lats = srm_candidates(z0, cfg)
    message = key.message

    sims = np.empty(0)
    msgs = np.empty((0, policy.k), dtype=np.uint8)
    # the standard candidate alone first; most watermarked circuits stop there
    bounds = [0, 1] + list(range(1 + _CHUNK, len(descs), _CHUNK)) + [len(descs)]
    bounds = sorted(set(bounds))
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        m = extract_messages(lats[lo:hi], key, policy.k, backend, schedule, guidance, refine, erasures)
        s = (m == message).mean(axis=1)
        msgs = np.concatenate([msgs, m])
        sims = np.concatenate([sims, s])
        if cfg.early_stop and (s >= policy.tau).any():
            break

    accepted = np.flatnonzero(sims >= policy.tau)
    if accepted.size and cfg.early_stop:
        best = int(accepted[0])
        tried = best + 1
    elif accepted.size:
        best = int(accepted[np.argmax(sims[accepted])])
        tried = len(sims)
    else:
        best = int(np.argmax(sims))
        tried = len(sims)
    return DetectionReport(
        detected=bool(accepted.size),
        best_similarity=float(sims[best]),
        best_candidate=descs[best],
        extracted_message=msgs[best],
        candidates_tried=tried,
        truncated=truncated,
    )
