"""Kraus sets and their algebra: application to density matrices, contraction
to normal form, Hilbert-Schmidt inner product, the Loewner order, Choi-based
channel equivalence, and the inversion/commutator reordering identity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CqplError

DEFAULT_TOL = 1e-9


class DimensionError(CqplError):
    pass


class HermitianError(CqplError):
    pass


def _as_matrices(ops) -> list[np.ndarray]:
    return [np.asarray(op, dtype=complex) for op in ops]


def apply_set(ops, rho) -> np.ndarray:
    """Apply a Kraus set to a density matrix: sum_k A_k rho A_k^dag.

    The result may be sub-normalised when the set is not trace preserving
    (e.g. a single projector).
    """
    ops = _as_matrices(ops)
    rho = np.asarray(rho, dtype=complex)
    d_in = ops[0].shape[1]
    if rho.shape != (d_in, d_in):
        raise DimensionError(f"state is {rho.shape}, operators expect {d_in}")
    out = np.zeros((ops[0].shape[0], ops[0].shape[0]), dtype=complex)
    for op in ops:
        if op.shape != ops[0].shape:
            raise DimensionError("mixed operator shapes in one Kraus set")
        out += op @ rho @ op.conj().T
    return out


def contract(first, second) -> list[np.ndarray]:
    """Contract two sequentially applied Kraus sets into one.

    `first` is applied before `second`; with both sets zero-padded to a
    common cardinality N, entry i*N+j of the result is second[i] @ first[j],
    so applying the contraction equals applying `first` then `second`.
    """
    first = _as_matrices(first)
    second = _as_matrices(second)
    if second[0].shape[1] != first[0].shape[0]:
        raise DimensionError(
            f"inner dimensions do not match: {first[0].shape} then "
            f"{second[0].shape}")
    n = max(len(first), len(second))
    a_pad = first + [np.zeros_like(first[0])] * (n - len(first))
    b_pad = second + [np.zeros_like(second[0])] * (n - len(second))
    return [b @ a for b in b_pad for a in a_pad]


def contract_all(sets) -> list[np.ndarray]:
    """Fold a list of Kraus sets (applied left to right) into normal form."""
    sets = list(sets)
    if not sets:
        raise ValueError("need at least one Kraus set")
    result = _as_matrices(sets[0])
    for nxt in sets[1:]:
        result = contract(result, nxt)
        # drop exact-zero padding products to keep cardinality in check
        result = [op for op in result if np.any(op)] or [result[0]]
    return result


def hs_inner(k, l) -> complex:
    """Hilbert-Schmidt inner product tr(K^dag L)."""
    k = np.asarray(k, dtype=complex)
    l = np.asarray(l, dtype=complex)
    if k.shape != l.shape:
        raise DimensionError(f"shapes differ: {k.shape} vs {l.shape}")
    return complex(np.trace(k.conj().T @ l))


def hs_norm(k) -> float:
    return float(np.sqrt(hs_inner(k, k).real))


def is_hermitian(a, tol: float = DEFAULT_TOL) -> bool:
    a = np.asarray(a, dtype=complex)
    return a.shape[0] == a.shape[1] and np.max(np.abs(a - a.conj().T)) <= tol


def loewner_leq(a, b, tol: float = DEFAULT_TOL) -> bool:
    """Loewner order A <= B: is B - A positive semidefinite?

    The positive-semidefinite reading keeps the relation reflexive; the
    strict form would not be a partial order.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise DimensionError(f"shapes differ: {a.shape} vs {b.shape}")
    if not (is_hermitian(a, tol) and is_hermitian(b, tol)):
        raise HermitianError("operands must be Hermitian")
    diff = b - a
    diff = (diff + diff.conj().T) / 2
    return bool(np.linalg.eigvalsh(diff).min() >= -tol)


def choi_matrix(ops) -> np.ndarray:
    """Choi matrix sum_k |A_k>><<A_k| with column-stacking vec.

    Equal Choi matrices characterise equal completely positive maps, which
    replaces the search for a unitary mixing between two Kraus sets.
    """
    ops = _as_matrices(ops)
    d_out, d_in = ops[0].shape
    choi = np.zeros((d_out * d_in, d_out * d_in), dtype=complex)
    for op in ops:
        if op.shape != (d_out, d_in):
            raise DimensionError("mixed operator shapes in one Kraus set")
        v = op.T.reshape(-1, 1)  # column stacking
        choi += v @ v.conj().T
    return choi


def channel_equiv(set1, set2, tol: float = DEFAULT_TOL) -> bool:
    """Do two Kraus sets implement the same completely positive map?"""
    set1 = _as_matrices(set1)
    set2 = _as_matrices(set2)
    if set1[0].shape != set2[0].shape:
        raise DimensionError(
            f"channel shapes differ: {set1[0].shape} vs {set2[0].shape}")
    return bool(np.max(np.abs(choi_matrix(set1) - choi_matrix(set2))) <= tol)


def is_trace_preserving(ops, tol: float = DEFAULT_TOL) -> bool:
    ops = _as_matrices(ops)
    d_in = ops[0].shape[1]
    acc = sum(op.conj().T @ op for op in ops)
    return bool(np.max(np.abs(acc - np.eye(d_in))) <= tol)


# ---------------------------------------------------------------------------
# Permutations and the commutator reordering identity


class Permutation:
    """A bijection on [1..n], stored as the image sequence (one-line form)."""

    def __init__(self, images):
        self.images = tuple(int(x) for x in images)
        n = len(self.images)
        if sorted(self.images) != list(range(1, n + 1)):
            raise ValueError(f"{images!r} is not a permutation of 1..{n}")
        self._inverse = [0] * (n + 1)
        for i, img in enumerate(self.images, start=1):
            self._inverse[img] = i

    @classmethod
    def from_digits(cls, digits: str) -> "Permutation":
        return cls([int(c) for c in digits])

    def __len__(self) -> int:
        return len(self.images)

    def __call__(self, i: int) -> int:
        return self.images[i - 1]

    def inverse(self, value: int) -> int:
        return self._inverse[value]

    def is_identity(self) -> bool:
        return all(self(i) == i for i in range(1, len(self) + 1))

    def __repr__(self):
        return f"Permutation({''.join(map(str, self.images))})"


def inversions(phi: Permutation) -> list[tuple[int, int]]:
    """All pairs (s, t) with t < s placed out of order by phi.

    Listed in scan order of the permuted sequence: for every position pair
    i < j with phi(i) > phi(j) the inversion (phi(i), phi(j)) is reported.
    """
    n = len(phi)
    out = []
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            if phi(i) > phi(j):
                out.append((phi(i), phi(j)))
    return out


@dataclass(frozen=True)
class CommutatorTerm:
    """One correction term X * [A_s, A_t] * Y * Z of the reordering identity.

    The index lists hold operator subscripts in product order.
    """

    s: int
    t: int
    x: tuple[int, ...]
    y: tuple[int, ...]
    z: tuple[int, ...]

    def render(self) -> str:
        def seq(ix):
            return "".join(str(i) for i in ix)
        return f"{seq(self.x)}[{self.s},{self.t}]{seq(self.y)}{seq(self.z)}"


@dataclass(frozen=True)
class CommutatorExpansion:
    product: tuple[int, ...]  # the identity-ordered product A_1 ... A_n
    terms: tuple[CommutatorTerm, ...]

    def render(self) -> str:
        parts = ["".join(str(i) for i in self.product)]
        parts.extend(term.render() for term in self.terms)
        return " + ".join(parts)


def commutator_expansion(phi: Permutation) -> CommutatorExpansion:
    """Rewrite a permuted operator product as the straight product plus
    commutator corrections, one per inversion of the permutation.

    For an inversion (s, t): X collects A_phi(i) with phi(i) < s and
    i < phi^-1(t); Y collects A_phi(i) with phi(i) < s and i > phi^-1(t);
    Z collects A_k for s < k <= n.
    """
    n = len(phi)
    terms = []
    for s, t in sorted(inversions(phi), key=lambda st: (-st[0], -st[1])):
        inv_t = phi.inverse(t)
        x = tuple(phi(i) for i in range(1, n + 1) if phi(i) < s and i < inv_t)
        y = tuple(phi(i) for i in range(1, n + 1) if phi(i) < s and i > inv_t)
        z = tuple(range(s + 1, n + 1))
        terms.append(CommutatorTerm(s=s, t=t, x=x, y=y, z=z))
    return CommutatorExpansion(product=tuple(range(1, n + 1)),
                               terms=tuple(terms))


def _product(mats: list[np.ndarray], indices, dim: int) -> np.ndarray:
    out = np.eye(dim, dtype=complex)
    for i in indices:
        out = out @ mats[i - 1]
    return out


def verify_commutator_identity(mats, phi: Permutation) -> float:
    """Max-abs residual between the permuted product and its expansion."""
    mats = _as_matrices(mats)
    n = len(phi)
    if len(mats) != n:
        raise DimensionError(f"need {n} matrices, got {len(mats)}")
    dim = mats[0].shape[0]
    for m in mats:
        if m.shape != (dim, dim):
            raise DimensionError("matrices must share one square shape")
    lhs = _product(mats, (phi(i) for i in range(1, n + 1)), dim)
    expansion = commutator_expansion(phi)
    rhs = _product(mats, expansion.product, dim)
    for term in expansion.terms:
        a_s, a_t = mats[term.s - 1], mats[term.t - 1]
        comm = a_s @ a_t - a_t @ a_s
        rhs = rhs + (_product(mats, term.x, dim) @ comm
                     @ _product(mats, term.y, dim) @ _product(mats, term.z, dim))
    return float(np.max(np.abs(lhs - rhs)))
