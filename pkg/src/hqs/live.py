"""Growable dense register used by the evaluation engine.

A :class:`LiveRegister` stores a single operator on a changing set of qubits as
a flat ``4**n`` tensor: axes ``0..n-1`` are row legs and ``n..2n-1`` column
legs, with axis ``j`` (and ``n+j``) belonging to ``qubits[j]``.  Qubits can be
added (tensoring a one-qubit factor) and removed (contracting with a one-qubit
factor) at any time, so a simulation only ever holds the qubits that are alive.

The same object serves both pictures:

* Schrödinger: the operator is a state; ``add`` tensors in an initial state and
  ``remove`` traces out.
* Heisenberg: the operator is an observable; ``add`` tensors in the identity and
  ``remove`` contracts with the (initial) state of the removed qubit.
"""

from __future__ import annotations

import os
from collections.abc import Sequence

import numpy as np

from . import kernels
from .core import DenseOperator, QubitId


class CeilingError(RuntimeError):
    """The live register would exceed the dense-qubit ceiling."""


def dense_ceiling() -> int:
    return int(os.environ.get("HQS_DENSE_QUBIT_CEILING", "13"))


class LiveRegister:
    """Dense operator on a dynamically changing qubit set."""

    def __init__(self, ceiling: int | None = None):
        self.qubits: list[QubitId] = []
        self.data = np.ones(1, dtype=complex)
        self.ceiling = dense_ceiling() if ceiling is None else ceiling
        self.peak = 0

    @classmethod
    def from_operator(cls, op: DenseOperator, ceiling: int | None = None) -> LiveRegister:
        reg = cls(ceiling)
        if op.num_qubits > reg.ceiling:
            raise CeilingError(f"operator on {op.num_qubits} qubits exceeds ceiling {reg.ceiling}")
        reg.qubits = list(reversed(op.support))
        reg.data = np.ascontiguousarray(op.matrix, dtype=complex).reshape(-1).copy()
        reg.peak = reg.n
        return reg

    # -- bookkeeping --------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.qubits)

    def __contains__(self, q: QubitId) -> bool:
        return q in self.qubits

    def _bitpos(self, q: QubitId, col: bool = False) -> int:
        j = self.qubits.index(q) + (self.n if col else 0)
        return 2 * self.n - 1 - j

    # -- structural operations ---------------------------------------------

    def add(self, q: QubitId, factor: np.ndarray) -> None:
        """Tensor in a one-qubit factor on a new qubit ``q``."""
        if q in self.qubits:
            raise ValueError(f"{q} already live")
        if self.n + 1 > self.ceiling:
            raise CeilingError(f"dense register would hold {self.n + 1} qubits (ceiling {self.ceiling})")
        d = 1 << self.n
        m = self.data.reshape(d, d)
        out = m[:, None, :, None] * np.asarray(factor, dtype=complex)[None, :, None, :]
        self.data = out.reshape(-1)
        self.qubits.append(q)
        self.peak = max(self.peak, self.n)

    def remove(self, q: QubitId, factor: np.ndarray | None = None) -> None:
        """Contract qubit ``q`` away: result = Tr_q[(I ⊗ factor) · data].

        With ``factor=None`` this is a plain partial trace.
        """
        j = self.qubits.index(q)
        n = self.n
        d_lo, d_hi = 1 << j, 1 << (n - j - 1)
        t = self.data.reshape(d_lo, 2, d_hi, d_lo, 2, d_hi)
        if factor is None:
            out = np.einsum("aibcid->abcd", t)
        else:
            out = np.einsum("aibcjd,ji->abcd", t, np.asarray(factor, dtype=complex))
        self.data = np.ascontiguousarray(out).reshape(-1)
        del self.qubits[j]

    # -- dynamics -----------------------------------------------------------

    def apply_matrix_rows(self, mat: np.ndarray, qubits: Sequence[QubitId]) -> None:
        pos = [self._bitpos(q) for q in qubits]
        self.data = kernels.apply_local(self.data, 2 * self.n, mat, pos)

    def apply_matrix_cols(self, mat: np.ndarray, qubits: Sequence[QubitId]) -> None:
        pos = [self._bitpos(q, col=True) for q in qubits]
        self.data = kernels.apply_local(self.data, 2 * self.n, mat, pos)

    def conjugate(self, u: np.ndarray, qubits: Sequence[QubitId], heisenberg: bool = False) -> None:
        """``X -> U X U†`` (or ``U† X U`` when ``heisenberg``)."""
        u = np.asarray(u, dtype=complex)
        if heisenberg:
            self.apply_matrix_rows(u.conj().T, qubits)
            self.apply_matrix_cols(u.T, qubits)
        else:
            self.apply_matrix_rows(u, qubits)
            self.apply_matrix_cols(u.conj(), qubits)

    def apply_superop(self, sop: np.ndarray, qubits: Sequence[QubitId]) -> None:
        """Apply a superoperator acting on legs [rows of qubits, cols of qubits].

        For a Kraus map the Schrödinger superoperator is ``Σ kron(K̄, K)`` and its
        Heisenberg dual is ``Σ kron(Kᵀ, K†)``.
        """
        pos = [self._bitpos(q) for q in qubits] + [self._bitpos(q, col=True) for q in qubits]
        self.data = kernels.apply_local(self.data, 2 * self.n, sop, pos)

    # -- readout ------------------------------------------------------------

    def matrix(self) -> np.ndarray:
        d = 1 << self.n
        return self.data.reshape(d, d)

    def to_operator(self, order: Sequence[QubitId] | None = None) -> DenseOperator:
        """Return the held operator as a little-endian :class:`DenseOperator`."""
        # row-major flat index: qubits[0] is the slowest bit
        natural = tuple(reversed(self.qubits))
        op = DenseOperator(natural, self.matrix().copy())
        return op if order is None else op.reorder(order)

    def scalar(self) -> complex:
        if self.n:
            raise ValueError("register still holds qubits")
        return complex(self.data[0])


def kraus_superop(kraus: Sequence[np.ndarray], heisenberg: bool = False) -> np.ndarray:
    if heisenberg:
        return sum(np.kron(k.T, k.conj().T) for k in kraus)
    return sum(np.kron(k.conj(), k) for k in kraus)
