"""Grid circuit representation, a small QASM dialect, and a dense simulator.

A circuit is a ``(num_qubits, num_columns)`` grid of gate tokens.  Multi-qubit
gates are stored as *partner tokens* (e.g. ``CX_C`` on the control row and
``CX_T`` on the target row of the same column).  Because partner tokens carry
no explicit link, a column holds at most one group of each multi-qubit kind.

Qubit 0 is the most significant tensor axis in the simulator, and column 0
acts first.
"""
from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateOperand,
    InvalidCircuit,
    QasmSyntaxError,
    QubitOutOfRange,
    TooManyQubits,
    UnsupportedGate,
)

DEFAULT_QUBITS = 8
MAX_SIM_QUBITS = 10


class Gate(enum.IntEnum):
    IDENT = 0
    H = 1
    X = 2
    Y = 3
    Z = 4
    S = 5
    SDG = 6
    T = 7
    TDG = 8
    CX_C = 9
    CX_T = 10
    CCX_C1 = 11
    CCX_C2 = 12
    CCX_T = 13
    SWAP_A = 14
    SWAP_B = 15


SINGLE_QUBIT = (Gate.H, Gate.X, Gate.Y, Gate.Z, Gate.S, Gate.SDG, Gate.T, Gate.TDG)

# multi-qubit kinds: QASM name -> roles, in operand order
GROUPS: dict[str, tuple[Gate, ...]] = {
    "cx": (Gate.CX_C, Gate.CX_T),
    "ccx": (Gate.CCX_C1, Gate.CCX_C2, Gate.CCX_T),
    "swap": (Gate.SWAP_A, Gate.SWAP_B),
}
ROLE_TO_GROUP = {role: name for name, roles in GROUPS.items() for role in roles}

QASM_NAME = {
    Gate.H: "h", Gate.X: "x", Gate.Y: "y", Gate.Z: "z",
    Gate.S: "s", Gate.SDG: "sdg", Gate.T: "t", Gate.TDG: "tdg",
}
NAME_TO_SINGLE = {v: k for k, v in QASM_NAME.items()}

_S2 = 1.0 / np.sqrt(2.0)
SINGLE_MATRICES: dict[Gate, np.ndarray] = {
    Gate.H: np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    Gate.X: np.array([[0, 1], [1, 0]], dtype=complex),
    Gate.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    Gate.Z: np.array([[1, 0], [0, -1]], dtype=complex),
    Gate.S: np.array([[1, 0], [0, 1j]], dtype=complex),
    Gate.SDG: np.array([[1, 0], [0, -1j]], dtype=complex),
    Gate.T: np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex),
    Gate.TDG: np.array([[1, 0], [0, np.exp(-1j * np.pi / 4)]], dtype=complex),
}


def _controlled_x(num_controls: int) -> np.ndarray:
    dim = 2 ** (num_controls + 1)
    m = np.eye(dim, dtype=complex)
    m[[dim - 2, dim - 1]] = m[[dim - 1, dim - 2]]
    return m


GROUP_MATRICES: dict[str, np.ndarray] = {
    "cx": _controlled_x(1),
    "ccx": _controlled_x(2),
    "swap": np.eye(4, dtype=complex)[[0, 2, 1, 3]],
}


@dataclass(frozen=True, eq=False)
class Circuit:
    """Immutable token grid; ``grid[q, t]`` is the gate on qubit ``q`` at column ``t``."""

    grid: np.ndarray

    def __post_init__(self):
        g = np.array(self.grid, dtype=np.int8, copy=True)
        if g.ndim != 2 or g.shape[0] < 1:
            raise InvalidCircuit(f"grid must be (num_qubits>=1, num_columns), got {g.shape}")
        if g.size and (g.min() < 0 or g.max() > 15):
            raise InvalidCircuit("token ids must lie in [0, 15]")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)
        bad = incomplete_group_mask(g)
        if bad.any():
            q, t = np.argwhere(bad)[0]
            raise InvalidCircuit(f"incomplete partner group at qubit {q}, column {t}")

    @classmethod
    def empty(cls, num_qubits: int = DEFAULT_QUBITS, num_columns: int = 0) -> "Circuit":
        return cls(np.zeros((num_qubits, num_columns), dtype=np.int8))

    @classmethod
    def from_columns(cls, columns: Sequence[Sequence[int]], num_qubits: int | None = None) -> "Circuit":
        """Build from a list of columns, each a per-qubit token list."""
        if not columns:
            return cls.empty(num_qubits or DEFAULT_QUBITS)
        c = cls(np.array(columns, dtype=np.int8).T)
        if num_qubits is not None and c.num_qubits != num_qubits:
            raise DimensionMismatch(f"columns have {c.num_qubits} rows, expected {num_qubits}")
        return c

    @property
    def num_qubits(self) -> int:
        return self.grid.shape[0]

    @property
    def num_columns(self) -> int:
        return self.grid.shape[1]

    def columns(self) -> list[list[Gate]]:
        return [[Gate(int(v)) for v in col] for col in self.grid.T]

    def gate_count(self) -> int:
        """Gate instances; a partner group counts once."""
        g = self.grid
        singles = np.isin(g, [int(x) for x in SINGLE_QUBIT]).sum()
        groups = sum(int((g == roles[0]).sum()) for roles in GROUPS.values())
        return int(singles + groups)

    def __eq__(self, other):
        if not isinstance(other, Circuit):
            return NotImplemented
        return self.grid.shape == other.grid.shape and bool(np.array_equal(self.grid, other.grid))

    def __hash__(self):
        return hash((self.grid.shape, self.grid.tobytes()))

    def __repr__(self):
        return f"Circuit(num_qubits={self.num_qubits}, num_columns={self.num_columns}, gates={self.gate_count()})"


def incomplete_group_mask(grid: np.ndarray) -> np.ndarray:
    """Mask of partner cells whose column lacks exactly one of each role.

    Accepts a single grid ``(q, cols)`` or a batch ``(..., q, cols)``.
    """
    grid = np.asarray(grid)
    bad = np.zeros(grid.shape, dtype=bool)
    for roles in GROUPS.values():
        ok = np.ones(grid.shape[:-2] + grid.shape[-1:], dtype=bool)
        in_group = np.zeros(grid.shape, dtype=bool)
        for r in roles:
            hit = grid == r
            ok &= hit.sum(axis=-2) == 1
            in_group |= hit
        bad |= in_group & ~ok[..., None, :]
    return bad


def column_groups(column: np.ndarray) -> list[tuple[str, tuple[int, ...]]]:
    """Multi-qubit gates of one valid column as ``(name, operand qubits)``."""
    out = []
    for name, roles in GROUPS.items():
        pos = [np.flatnonzero(column == r) for r in roles]
        if len(pos[0]):
            out.append((name, tuple(int(p[0]) for p in pos)))
    return out


# --------------------------------------------------------------------------- QASM

_COMMENT = re.compile(r"//.*")
_QREG = re.compile(r"^qreg\s*q\s*\[\s*(\d+)\s*\]$")
_GATE = re.compile(r"^([a-z][a-z0-9_]*)\s*(\([^)]*\))?\s+(.+)$")
_OPERAND = re.compile(r"^q\s*\[\s*(\d+)\s*\]$")
_BARRIER = re.compile(r"^barrier\s+q$")
_KNOWN_UNSUPPORTED = {"rx", "ry", "rz", "u", "u1", "u2", "u3", "p", "cz", "cy", "ch",
                      "crz", "cu1", "cu3", "id", "sx", "sxdg", "measure", "reset",
                      "barrier", "creg", "cswap"}


def _statements(text: str) -> list[tuple[int, str]]:
    stmts = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _COMMENT.sub("", line).strip()
        if not body:
            continue
        parts = body.split(";")
        if parts[-1].strip():
            raise QasmSyntaxError(f"line {lineno}: statement missing ';': {parts[-1].strip()!r}")
        stmts.extend((lineno, p.strip()) for p in parts[:-1] if p.strip())
    return stmts


def parse_qasm(text: str, max_columns: int | None = None) -> Circuit:
    """Parse the QASM subset into a grid circuit.

    Each gate goes into the earliest column strictly after the last gate on
    any of its operands (as-soon-as-possible layering), skipping columns that
    already hold a group of the same multi-qubit kind.

    A full-register ``barrier q;`` closes the current column: later gates start
    in a fresh column after everything placed so far, and consecutive barriers
    leave empty columns.  Barriers on a subset of qubits are not supported.
    """
    stmts = _statements(text)
    stmts = [(n, s) for n, s in stmts if not s.startswith(("OPENQASM", "include"))]
    if not stmts:
        raise QasmSyntaxError("missing qreg declaration")
    lineno, first = stmts[0]
    m = _QREG.match(first)
    if not m:
        raise QasmSyntaxError(f"line {lineno}: expected 'qreg q[N]', got {first!r}")
    nq = int(m.group(1))
    if nq < 1:
        raise QasmSyntaxError(f"line {lineno}: register must have at least one qubit")

    cols: list[np.ndarray] = []
    last = [-1] * nq
    fence = 0
    for lineno, stmt in stmts[1:]:
        if _QREG.match(stmt):
            raise QasmSyntaxError(f"line {lineno}: only one qreg declaration is allowed")
        if _BARRIER.match(stmt):
            fence = max(fence + 1, len(cols))
            continue
        m = _GATE.match(stmt)
        if not m:
            raise QasmSyntaxError(f"line {lineno}: cannot parse {stmt!r}")
        name, params, args = m.group(1), m.group(2), m.group(3)
        if name in _KNOWN_UNSUPPORTED:
            raise UnsupportedGate(f"line {lineno}: gate {name!r} is not supported")
        if name in NAME_TO_SINGLE:
            roles: tuple[Gate, ...] = (NAME_TO_SINGLE[name],)
        elif name in GROUPS:
            roles = GROUPS[name]
        else:
            raise QasmSyntaxError(f"line {lineno}: unknown gate {name!r}")
        if params is not None:
            raise QasmSyntaxError(f"line {lineno}: gate {name!r} takes no parameters")
        operands = []
        for a in args.split(","):
            om = _OPERAND.match(a.strip())
            if not om:
                raise QasmSyntaxError(f"line {lineno}: bad operand {a.strip()!r}")
            operands.append(int(om.group(1)))
        if len(operands) != len(roles):
            raise QasmSyntaxError(f"line {lineno}: {name} takes {len(roles)} operand(s), got {len(operands)}")
        for q in operands:
            if q >= nq:
                raise QubitOutOfRange(f"line {lineno}: q[{q}] outside register of size {nq}")
        if len(set(operands)) != len(operands):
            raise DuplicateOperand(f"line {lineno}: repeated operand in {stmt!r}")

        t = max(fence, max(last[q] for q in operands) + 1)
        if len(roles) > 1:
            while t < len(cols) and np.isin(cols[t], [int(r) for r in roles]).any():
                t += 1
        while t >= len(cols):
            cols.append(np.zeros(nq, dtype=np.int8))
        for q, r in zip(operands, roles):
            cols[t][q] = r
            last[q] = t
        if max_columns is not None and len(cols) > max_columns:
            raise QasmSyntaxError(f"line {lineno}: circuit exceeds {max_columns} columns")

    while len(cols) < fence:
        cols.append(np.zeros(nq, dtype=np.int8))
    if max_columns is not None and len(cols) > max_columns:
        raise QasmSyntaxError(f"circuit exceeds {max_columns} columns")
    grid = np.stack(cols, axis=1) if cols else np.zeros((nq, 0), dtype=np.int8)
    return Circuit(grid)


def emit_qasm(c: Circuit, barriers: bool = False) -> str:
    """Canonical text: column by column, top qubit first; groups emitted at their first operand.

    With ``barriers`` every column ends in ``barrier q;`` so that
    :func:`parse_qasm` restores the exact layout, empty columns included.
    """
    lines = [f"qreg q[{c.num_qubits}];"]
    for column in c.grid.T:
        groups = {ops[0]: (name, ops) for name, ops in column_groups(column)}
        for q, tok in enumerate(column):
            tok = Gate(int(tok))
            if tok in QASM_NAME:
                lines.append(f"{QASM_NAME[tok]} q[{q}];")
            elif q in groups:
                name, ops = groups[q]
                lines.append(f"{name} " + ",".join(f"q[{o}]" for o in ops) + ";")
        if barriers:
            lines.append("barrier q;")
    return "\n".join(lines) + "\n"


def canonicalize(c: Circuit) -> Circuit:
    """ASAP re-layering; the fixed point of ``parse_qasm(emit_qasm(.))``."""
    return parse_qasm(emit_qasm(c))


def compact_columns(c: Circuit) -> Circuit:
    keep = (c.grid != Gate.IDENT).any(axis=0)
    return Circuit(c.grid[:, keep])


def circuit_to_json(c: Circuit) -> str:
    """Exact layout as JSON: ``{"num_qubits": q, "columns": [[token, ...], ...]}``."""
    return json.dumps({"num_qubits": c.num_qubits, "columns": c.grid.T.tolist()}) + "\n"


def circuit_from_json(text: str) -> Circuit:
    d = json.loads(text)
    return Circuit.from_columns(d["columns"], num_qubits=int(d["num_qubits"]))


def save_circuit(path, c: Circuit) -> None:
    """Write ``.qasm`` text with column barriers or the JSON grid for any other suffix; both keep the layout."""
    with open(path, "w") as fh:
        fh.write(emit_qasm(c, barriers=True) if str(path).endswith(".qasm") else circuit_to_json(c))


def load_circuit(path) -> Circuit:
    with open(path) as fh:
        text = fh.read()
    return parse_qasm(text) if str(path).endswith(".qasm") else circuit_from_json(text)


# ---------------------------------------------------------------------- simulator

def _apply(state: np.ndarray, mat: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    k = len(qubits)
    op = mat.reshape((2,) * (2 * k))
    out = np.tensordot(op, state, axes=(list(range(k, 2 * k)), list(qubits)))
    return np.moveaxis(out, list(range(k)), list(qubits))


def _column_ops(column: np.ndarray) -> Iterable[tuple[np.ndarray, tuple[int, ...]]]:
    for q, tok in enumerate(column):
        tok = Gate(int(tok))
        if tok in SINGLE_MATRICES:
            yield SINGLE_MATRICES[tok], (q,)
    for name, ops in column_groups(column):
        yield GROUP_MATRICES[name], ops


def _evolve(c: Circuit, state: np.ndarray) -> np.ndarray:
    for column in c.grid.T:
        for mat, ops in _column_ops(column):
            state = _apply(state, mat, ops)
    return state


def simulate_unitary(c: Circuit) -> np.ndarray:
    """Dense ``2^q x 2^q`` unitary of the whole circuit."""
    nq = c.num_qubits
    if nq > MAX_SIM_QUBITS:
        raise TooManyQubits(f"{nq} qubits exceeds the dense limit of {MAX_SIM_QUBITS}")
    dim = 2 ** nq
    # trailing axis indexes the input basis state
    u = np.eye(dim, dtype=complex).reshape((2,) * nq + (dim,))
    return _evolve(c, u).reshape(dim, dim)


def simulate_statevector(c: Circuit, initial: np.ndarray | None = None) -> np.ndarray:
    nq = c.num_qubits
    if nq > MAX_SIM_QUBITS:
        raise TooManyQubits(f"{nq} qubits exceeds the dense limit of {MAX_SIM_QUBITS}")
    if initial is None:
        initial = np.zeros(2 ** nq, dtype=complex)
        initial[0] = 1.0
    state = np.asarray(initial, dtype=complex).reshape((2,) * nq)
    return _evolve(c, state).reshape(-1)


def outcome_distribution(c: Circuit) -> np.ndarray:
    """Computational-basis measurement probabilities starting from ``|0...0>``."""
    return np.abs(simulate_statevector(c)) ** 2


def equivalent_up_to_phase(u1: np.ndarray, u2: np.ndarray, tol: float = 1e-10) -> bool:
    u1 = np.asarray(u1, dtype=complex)
    u2 = np.asarray(u2, dtype=complex)
    if u1.shape != u2.shape:
        raise DimensionMismatch(f"{u1.shape} vs {u2.shape}")
    a, b = u1.ravel(), u2.ravel()
    big = np.flatnonzero((np.abs(a) > tol) & (np.abs(b) > tol))
    if big.size:
        i = big[0]
        phase = a[i] / b[i]
        phase /= abs(phase)
    else:
        phase = 1.0
    return bool(np.max(np.abs(a - phase * b), initial=0.0) <= tol)
