"""Quantum memory for the QRAM execution model.

A single state vector holds all currently allocated qbits of a simulation.
Qbits are addressed by stable heap indices; the mapping onto tensor slots is
kept internally. The first qbit of a target tuple is the leftmost ket
symbol, i.e. the most significant bit of basis patterns and outcomes.

The heap capacity is an allocation budget (the CLI's --qheap); the dense
simulation cap bounds how many qbits may be live at once, since amplitude
vectors grow as 2^m.
"""
from __future__ import annotations

import math
from functools import reduce

import numpy as np

from .errors import E_BAD_PARAM, E_DIM_MISMATCH, E_HEAP_EXHAUSTED, E_SIM_CAP, RuntimeFailure

NORM_TOL = 1e-9
SPECTRUM_EPS = 1e-12

DEFAULT_QHEAP = 200
DEFAULT_SIM_CAP = 24

_SQRT2_INV = 1.0 / math.sqrt(2.0)

H_MATRIX = np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV
NOT_MATRIX = np.array([[0, 1], [1, 0]], dtype=complex)
CNOT_MATRIX = np.array([[1, 0, 0, 0],
                        [0, 1, 0, 0],
                        [0, 0, 0, 1],
                        [0, 0, 1, 0]], dtype=complex)


def phase_matrix(shift: float) -> np.ndarray:
    return np.array([[1, 0], [0, np.exp(1j * shift)]], dtype=complex)


def ft_matrix(n: int) -> np.ndarray:
    """The n-qbit `FT` gate: the n-fold tensor product of Hadamards."""
    if n < 1:
        raise RuntimeFailure(E_BAD_PARAM, f"FT needs n >= 1, got {n}")
    return reduce(np.kron, [H_MATRIX] * n)


def builtin_gate(name: str, params: tuple = ()) -> np.ndarray:
    """Unitary matrix of a named builtin gate."""
    if name == "H":
        return H_MATRIX.copy()
    if name == "Not":
        return NOT_MATRIX.copy()
    if name == "CNot":
        return CNOT_MATRIX.copy()
    if name == "Phase":
        (shift,) = params
        if isinstance(shift, complex):
            raise RuntimeFailure(E_BAD_PARAM, "Phase shift must be real")
        return phase_matrix(float(shift))
    if name == "FT":
        (n,) = params
        return ft_matrix(int(n))
    raise RuntimeFailure(E_BAD_PARAM, f"unknown gate '{name}'")


def format_probability(p: float) -> str:
    """Shortest decimal that round-trips within 1e-9 (so 1, 0.5, 0.25)."""
    for digits in range(13):
        text = f"{p:.{digits}f}"
        if abs(float(text) - p) <= 1e-9:
            if "." in text:
                text = text.rstrip("0").rstrip(".")
            return text or "0"
    return repr(p)


class QuantumState:
    """Complex amplitude vector over dynamically allocated heap qbits."""

    def __init__(self, qheap: int = DEFAULT_QHEAP, sim_cap: int = DEFAULT_SIM_CAP):
        if qheap < 1 or sim_cap < 1:
            raise ValueError("qheap and sim_cap must be >= 1")
        self.qheap = qheap
        self.sim_cap = sim_cap
        self.amplitudes = np.ones(1, dtype=complex)
        self.slot_of: dict[int, int] = {}
        self._slots: list[int] = []     # heap index per tensor slot
        self._free: list[int] = []      # released heap indices, reusable
        self._next_index = 0
        self._allocated_budget = 0      # counts against the heap budget

    # -- bookkeeping -------------------------------------------------------

    @property
    def num_qbits(self) -> int:
        return len(self._slots)

    def _take_index(self) -> int:
        if self._free:
            return self._free.pop(0)
        idx = self._next_index
        self._next_index += 1
        return idx

    def _check_targets(self, targets: list[int]):
        if len(set(targets)) != len(targets):
            raise RuntimeFailure(E_DIM_MISMATCH, "duplicate gate targets")
        for t in targets:
            if t not in self.slot_of:
                raise RuntimeFailure(E_DIM_MISMATCH, f"qbit {t} is not allocated")

    # -- operations ----------------------------------------------------------

    def alloc(self, n: int, init: int = 0) -> list[int]:
        """Allocate n qbits initialised to the basis pattern `init`.

        The first returned index is the most significant bit of the pattern.
        """
        if self._allocated_budget + n > self.qheap:
            raise RuntimeFailure(E_HEAP_EXHAUSTED,
                                 f"quantum heap of {self.qheap} qbit(s) exhausted")
        if self.num_qbits + n > self.sim_cap:
            raise RuntimeFailure(E_SIM_CAP,
                                 f"dense simulation cap of {self.sim_cap} "
                                 "qbit(s) exceeded")
        basis = np.zeros(1 << n, dtype=complex)
        basis[init] = 1.0
        self.amplitudes = np.kron(self.amplitudes, basis)
        indices = []
        for k in range(n):
            idx = self._take_index()
            self.slot_of[idx] = len(self._slots)
            self._slots.append(idx)
            indices.append(idx)
        self._allocated_budget += n
        return indices

    def apply(self, matrix: np.ndarray, targets: list[int]):
        """Apply a unitary on the target qbits (first target = leftmost ket)."""
        self._check_targets(targets)
        k = len(targets)
        if matrix.shape != (1 << k, 1 << k):
            raise RuntimeFailure(E_DIM_MISMATCH,
                                 f"{matrix.shape[0]}-dimensional gate applied "
                                 f"to {k} qbit(s)")
        m = self.num_qbits
        axes = [self.slot_of[t] for t in targets]
        psi = self.amplitudes.reshape([2] * m)
        psi = np.moveaxis(psi, axes, range(k))
        shape = psi.shape
        psi = matrix @ psi.reshape(1 << k, -1)
        psi = np.moveaxis(psi.reshape(shape), range(k), axes)
        self.amplitudes = np.ascontiguousarray(psi).reshape(-1)

    def _marginal(self, targets: list[int]) -> np.ndarray:
        m = self.num_qbits
        k = len(targets)
        axes = [self.slot_of[t] for t in targets]
        probs = np.abs(self.amplitudes.reshape([2] * m)) ** 2
        probs = np.moveaxis(probs, axes, range(k))
        return probs.reshape(1 << k, -1).sum(axis=1)

    def measure(self, targets: list[int], rng: np.random.Generator) -> int:
        """Sample a standard-basis outcome and project the state onto it.

        Measured qbits remain allocated in the post-measurement basis state.
        """
        self._check_targets(targets)
        probs = self._marginal(targets)
        draw = rng.random() * probs.sum()
        acc = 0.0
        outcome = len(probs) - 1
        for value, p in enumerate(probs):
            acc += p
            if draw < acc:
                outcome = value
                break
        self.project(targets, outcome)
        return outcome

    def project(self, targets: list[int], outcome: int):
        """Deterministically project onto `outcome` (used by release/replay)."""
        self._check_targets(targets)
        m = self.num_qbits
        axes = [self.slot_of[t] for t in targets]
        psi = self.amplitudes.reshape([2] * m)
        mask = np.zeros([2] * m, dtype=bool)
        sel = [slice(None)] * m
        for j, axis in enumerate(axes):
            bit = (outcome >> (len(axes) - 1 - j)) & 1
            sel[axis] = bit
        mask[tuple(sel)] = True
        psi = np.where(mask, psi, 0)
        norm = np.linalg.norm(psi)
        if norm < 1e-300:
            raise RuntimeFailure(E_DIM_MISMATCH,
                                 f"projection onto outcome {outcome} has "
                                 "probability zero")
        self.amplitudes = (psi / norm).reshape(-1)

    def spectrum(self, targets: list[int]) -> list[tuple[int, float]]:
        """Marginal probability of each basis pattern on the listed qbits.

        Non-destructive; entries below 1e-12 are omitted.
        """
        self._check_targets(targets)
        probs = self._marginal(targets)
        return [(pattern, float(p)) for pattern, p in enumerate(probs)
                if p >= SPECTRUM_EPS]

    def release(self, indices: list[int], rng: np.random.Generator):
        """Measure-and-discard: collapse the qbits, then drop their slots."""
        if not indices:
            return
        self._check_targets(indices)
        self.measure(indices, rng)
        m = self.num_qbits
        axes = sorted(self.slot_of[t] for t in indices)
        psi = self.amplitudes.reshape([2] * m)
        # after projection exactly one branch per released qbit survives
        for axis in reversed(axes):
            collapsed = psi.sum(axis=axis)
            psi = collapsed
        norm = np.linalg.norm(psi)
        self.amplitudes = (psi / norm).reshape(-1)
        released = set(indices)
        self._slots = [idx for idx in self._slots if idx not in released]
        self.slot_of = {idx: slot for slot, idx in enumerate(self._slots)}
        self._free.extend(sorted(released))
        self._allocated_budget -= len(indices)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))
