"""Structural watermark-removal attacks on grid circuits.

Every attack is a pure function of ``(circuit, AttackSpec)``; randomness comes
only from ``numpy.random.default_rng(spec.seed)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .circuit import GROUPS, SINGLE_QUBIT, Circuit, Gate, compact_columns
from .errors import ConfigInvalid, InsufficientTargets

KINDS = ("replace", "append", "insert", "delete", "drop_columns")
# count ranges exercised by the robustness sweeps
SWEEP_RANGES = {"replace": (1, 5), "append": (1, 5), "insert": (1, 2), "delete": (1, 3), "drop_columns": (1, 3)}

# single-gate replacements, each sequence in circuit order
REPLACEMENT_RULES: dict[Gate, tuple[Gate, Gate, Gate]] = {
    Gate.X: (Gate.H, Gate.Z, Gate.H),
    Gate.Z: (Gate.H, Gate.X, Gate.H),
    Gate.Y: (Gate.SDG, Gate.X, Gate.S),
}
STRICT_APPEND = (Gate.Z, Gate.S, Gate.SDG, Gate.T, Gate.TDG)
AGGRESSIVE_APPEND = SINGLE_QUBIT
INSERT_PAIRS = ("h", "x", "y", "z", "cx")


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    count: int = 1
    seed: int = 0
    mode: str = "strict"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigInvalid(f"unknown attack kind {self.kind!r}")
        if self.count < 0:
            raise ConfigInvalid("attack count must be >= 0")
        if self.mode not in ("strict", "aggressive"):
            raise ConfigInvalid(f"unknown append mode {self.mode!r}")

    @property
    def in_sweep_range(self) -> bool:
        lo, hi = SWEEP_RANGES[self.kind]
        return lo <= self.count <= hi

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AttackSpec":
        return cls(kind=d["kind"], count=int(d.get("count", 1)), seed=int(d.get("seed", 0)),
                   mode=d.get("mode", "strict"))


def _rng(spec: AttackSpec) -> np.random.Generator:
    return np.random.default_rng(spec.seed)


def _insert_columns(grid: np.ndarray, at: int, n: int) -> np.ndarray:
    return np.insert(grid, [at] * n, 0, axis=1)


def apply_replacement(c: Circuit, spec: AttackSpec) -> Circuit:
    """Swap ``count`` random X/Y/Z gates for equivalent three-gate sequences.

    The first gate of the sequence takes the original cell; two new columns
    holding the rest are spliced in directly after it.
    """
    if spec.count == 0:
        return c
    eligible = np.argwhere(np.isin(c.grid, [int(g) for g in REPLACEMENT_RULES]))
    if len(eligible) < spec.count:
        raise InsufficientTargets(f"{len(eligible)} replaceable gates, {spec.count} requested")
    picks = eligible[_rng(spec).choice(len(eligible), size=spec.count, replace=False)]
    # splice right-to-left so earlier column indices stay valid
    picks = picks[np.lexsort((picks[:, 0], -picks[:, 1]))]
    grid = c.grid.copy()
    for q, t in picks:
        first, second, third = REPLACEMENT_RULES[Gate(int(grid[q, t]))]
        grid[q, t] = first
        grid = _insert_columns(grid, t + 1, 2)
        grid[q, t + 1] = second
        grid[q, t + 2] = third
    return Circuit(grid)


def _line_end(grid: np.ndarray, q: int) -> int:
    busy = np.flatnonzero(grid[q] != Gate.IDENT)
    return int(busy[-1]) + 1 if busy.size else 0


def apply_append(c: Circuit, spec: AttackSpec) -> Circuit:
    """Add single-qubit gates after the last gate of random qubit lines.

    ``strict`` mode only uses diagonal gates, which leave computational-basis
    outcomes untouched; ``aggressive`` draws from every single-qubit gate.
    """
    rng = _rng(spec)
    pool = STRICT_APPEND if spec.mode == "strict" else AGGRESSIVE_APPEND
    grid = c.grid.copy()
    for _ in range(spec.count):
        q = int(rng.integers(c.num_qubits))
        gate = pool[int(rng.integers(len(pool)))]
        t = _line_end(grid, q)
        if t == grid.shape[1]:
            grid = _insert_columns(grid, t, 1)
        grid[q, t] = gate
    return Circuit(grid)


def _place_pair(grid: np.ndarray, start: int, qubits: tuple[int, ...], roles: tuple[Gate, ...]) -> np.ndarray:
    """Put two copies of a gate back to back on ``qubits`` at or after column ``start``.

    Free slots are reused until the first column where an operand is busy; any
    shortfall is made up by new columns inserted right before that column.
    """
    same_kind = [int(r) for r in roles] if len(roles) > 1 else []
    slots = []
    t = start
    while t < grid.shape[1] and len(slots) < 2:
        col = grid[:, t]
        if any(col[q] != Gate.IDENT for q in qubits):
            break
        if not (same_kind and np.isin(col, same_kind).any()):
            slots.append(t)
        t += 1
    missing = 2 - len(slots)
    if missing:
        grid = _insert_columns(grid, t, missing)
        slots += list(range(t, t + missing))
    for s in slots:
        for q, r in zip(qubits, roles):
            grid[q, s] = r
    return grid


def apply_insertion(c: Circuit, spec: AttackSpec) -> Circuit:
    """Insert ``count`` self-inverse pairs (H.H, X.X, Y.Y, Z.Z or CX.CX) at random places."""
    rng = _rng(spec)
    grid = c.grid.copy()
    nq = c.num_qubits
    for _ in range(spec.count):
        kind = INSERT_PAIRS[int(rng.integers(len(INSERT_PAIRS)))]
        if kind == "cx" and nq < 2:
            kind = "h"
        if kind == "cx":
            qubits = tuple(int(x) for x in rng.choice(nq, size=2, replace=False))
            roles = GROUPS["cx"]
        else:
            qubits = (int(rng.integers(nq)),)
            roles = (Gate[kind.upper()],)
        start = int(rng.integers(grid.shape[1] + 1))
        grid = _place_pair(grid, start, qubits, roles)
    return Circuit(grid)


def gate_instances(c: Circuit) -> list[list[tuple[int, int]]]:
    """Cells of every gate instance; a partner group is one instance."""
    out = []
    for t, column in enumerate(c.grid.T):
        for q, tok in enumerate(column):
            if Gate(int(tok)) in SINGLE_QUBIT:
                out.append([(q, t)])
        for roles in GROUPS.values():
            cells = [(int(np.flatnonzero(column == r)[0]), t) for r in roles if (column == r).any()]
            if len(cells) == len(roles):
                out.append(cells)
    return out


def apply_deletion(c: Circuit, spec: AttackSpec) -> Circuit:
    """Remove ``count`` random gate instances, then drop emptied columns."""
    if spec.count == 0:
        return c
    inst = gate_instances(c)
    if len(inst) < spec.count:
        raise InsufficientTargets(f"{len(inst)} gate instances, {spec.count} requested")
    grid = c.grid.copy()
    for i in _rng(spec).choice(len(inst), size=spec.count, replace=False):
        for q, t in inst[i]:
            grid[q, t] = Gate.IDENT
    return compact_columns(Circuit(grid))


def drop_columns(c: Circuit, spec: AttackSpec, region: float = 0.25) -> Circuit:
    """Cut ``count`` adjacent columns starting in the leading ``region`` of the circuit.

    Models a left shift of everything after the cut; used to ablate
    resynchronization.
    """
    w = spec.count
    if w == 0:
        return c
    if c.num_columns < w:
        raise InsufficientTargets(f"{c.num_columns} columns, {w} requested")
    hi = max(1, min(c.num_columns - w + 1, int(np.ceil(region * c.num_columns))))
    i = int(_rng(spec).integers(hi))
    return Circuit(np.delete(c.grid, np.s_[i:i + w], axis=1))


_DISPATCH = {
    "replace": apply_replacement,
    "append": apply_append,
    "insert": apply_insertion,
    "delete": apply_deletion,
    "drop_columns": drop_columns,
}


def apply_attack(c: Circuit, spec: AttackSpec) -> Circuit:
    return _DISPATCH[spec.kind](c, spec)
