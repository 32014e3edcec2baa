"""Dense finite-dimensional quantum objects: operators, states, channels, norms.

Index convention (used everywhere in the package): a matrix on an ordered
support ``[q0, q1, ..., q_{n-1}]`` is little-endian over the list, i.e. ``q0``
is the fastest-varying bit of the row/column index.  The matrix of a product
operator ``A_{q0} ⊗ B_{q1}`` is therefore ``np.kron(B, A)``.
"""

from __future__ import annotations

import enum
import functools
import itertools
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

ATOL = 1e-12


class SupportError(ValueError):
    """Raised when operator supports are incompatible."""


class Register(enum.Enum):
    BATH = "bath"
    SYSTEM = "system"
    SINK = "sink"
    ANCILLA = "ancilla"


@functools.total_ordering
@dataclass(frozen=True)
class QubitId:
    """A physical or virtual qubit.

    Attributes:
        register: Which device register the qubit belongs to.
        row: Row index ``t`` for system/sink qubits (1-based), an ancilla's row,
            and 0 for the bath.
        col: Column index in ``[0, lx)``; for ancillas, the ancilla slot.
    """

    register: Register
    row: int
    col: int

    def __str__(self) -> str:
        return f"{self.register.value}:{self.row}:{self.col}"

    def __lt__(self, other: QubitId) -> bool:
        order = list(Register)
        return (order.index(self.register), self.row, self.col) < (
            order.index(other.register), other.row, other.col)

    @classmethod
    def parse(cls, text: str) -> QubitId:
        try:
            reg, row, col = text.strip().split(":")
            return cls(Register(reg), int(row), int(col))
        except (ValueError, KeyError) as exc:
            raise ValueError(f"bad qubit id {text!r}") from exc


def bath(col: int) -> QubitId:
    return QubitId(Register.BATH, 0, col)


def system(row: int, col: int) -> QubitId:
    return QubitId(Register.SYSTEM, row, col)


def sink(row: int, col: int) -> QubitId:
    return QubitId(Register.SINK, row, col)


def ancilla(row: int, slot: int) -> QubitId:
    return QubitId(Register.ANCILLA, row, slot)


# --------------------------------------------------------------------------
# Basic matrices

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_MATRICES = {"I": I2, "X": X, "Y": Y, "Z": Z}

KET = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
}


def projector(label: str) -> np.ndarray:
    """Single-qubit pure state ``|label><label|`` for label in ``0 1 + -``."""
    v = KET[label]
    return np.outer(v, v.conj())


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Little-endian tensor product: ``mats[0]`` acts on the fastest bit."""
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(m, out)
    return out


def _check_support(support: Sequence[QubitId]) -> tuple[QubitId, ...]:
    support = tuple(support)
    if len(set(support)) != len(support):
        raise SupportError("support has duplicate qubits")
    return support


def permute_legs(matrix: np.ndarray, support: Sequence[QubitId],
                 new_support: Sequence[QubitId]) -> np.ndarray:
    """Reorder the tensor legs of a square matrix from ``support`` to ``new_support``."""
    support, new_support = tuple(support), tuple(new_support)
    if support == new_support:
        return matrix
    n = len(support)
    if sorted(support) != sorted(new_support):
        raise SupportError("support mismatch")
    # axis j of the (2,)*n reshape carries qubit support[n-1-j]
    pos = {q: n - 1 - i for i, q in enumerate(support)}
    perm = [pos[new_support[n - 1 - j]] for j in range(n)]
    t = matrix.reshape((2,) * (2 * n))
    t = t.transpose(perm + [p + n for p in perm])
    return t.reshape(matrix.shape)


def permutation_matrix(support: Sequence[QubitId], new_support: Sequence[QubitId]) -> np.ndarray:
    """Matrix P with P|ψ on support> = |ψ on new_support> (same state, new leg order)."""
    support, new_support = tuple(support), tuple(new_support)
    n = len(support)
    if sorted(support) != sorted(new_support):
        raise SupportError("support mismatch")
    pos = {q: n - 1 - i for i, q in enumerate(support)}
    perm = [pos[new_support[n - 1 - j]] for j in range(n)]
    d = 1 << n
    return np.eye(d, dtype=complex).reshape((2,) * n + (d,)).transpose(perm + [n]).reshape(d, d)


# --------------------------------------------------------------------------
# Operators and states


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """Complex matrix on an explicit ordered qubit support (little-endian)."""

    support: tuple[QubitId, ...]
    matrix: np.ndarray

    def __post_init__(self):
        support = _check_support(self.support)
        matrix = np.asarray(self.matrix, dtype=complex)
        d = 1 << len(support)
        if matrix.shape != (d, d):
            raise SupportError(f"matrix shape {matrix.shape} does not match {len(support)} qubits")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "matrix", matrix)

    @property
    def num_qubits(self) -> int:
        return len(self.support)

    def dag(self) -> DenseOperator:
        return DenseOperator(self.support, self.matrix.conj().T)

    def reorder(self, new_support: Sequence[QubitId]) -> DenseOperator:
        return DenseOperator(tuple(new_support), permute_legs(self.matrix, self.support, new_support))

    def is_hermitian(self, atol: float = ATOL) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=atol, rtol=0))

    def __add__(self, other: DenseOperator) -> DenseOperator:
        union = self.support + tuple(q for q in other.support if q not in self.support)
        return DenseOperator(union, embed(self, union).matrix + embed(other, union).matrix)

    def __sub__(self, other: DenseOperator) -> DenseOperator:
        return self + other.scale(-1.0)

    def __matmul__(self, other: DenseOperator) -> DenseOperator:
        union = self.support + tuple(q for q in other.support if q not in self.support)
        return DenseOperator(union, embed(self, union).matrix @ embed(other, union).matrix)

    def scale(self, c: complex) -> DenseOperator:
        return DenseOperator(self.support, c * self.matrix)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    @classmethod
    def identity(cls, support: Sequence[QubitId]) -> DenseOperator:
        return cls(tuple(support), np.eye(1 << len(support), dtype=complex))


@dataclass(frozen=True, eq=False)
class DensityMatrix(DenseOperator):
    """Positive semidefinite, unit-trace operator.

    Validation uses tolerance 1e-12 on hermiticity, trace and the smallest
    eigenvalue; negative eigenvalues are never clipped.
    """

    def __post_init__(self):
        super().__post_init__()
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=1e-12, rtol=0):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > 1e-12 * max(1, m.shape[0] / 64):
            raise ValueError(f"density matrix trace {np.trace(m).real} != 1")
        if m.shape[0] <= 1 << 10:
            lo = np.linalg.eigvalsh(m).min()
            if lo < -1e-12:
                raise ValueError(f"density matrix has negative eigenvalue {lo:.3g}")

    @classmethod
    def trusted(cls, support: Sequence[QubitId], matrix: np.ndarray) -> DensityMatrix:
        """Build without eigen-validation (for internally produced states)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "support", tuple(support))
        object.__setattr__(obj, "matrix", np.asarray(matrix, dtype=complex))
        return obj

    @classmethod
    def pure(cls, support: Sequence[QubitId], labels: str) -> DensityMatrix:
        """Product pure state, ``labels[i]`` on ``support[i]``."""
        return cls(tuple(support), kron_all([projector(c) for c in labels]))

    @classmethod
    def product(cls, support: Sequence[QubitId], factors: Sequence[np.ndarray]) -> DensityMatrix:
        return cls(tuple(support), kron_all(list(factors)))

    @classmethod
    def maximally_mixed(cls, support: Sequence[QubitId]) -> DensityMatrix:
        d = 1 << len(support)
        return cls(tuple(support), np.eye(d, dtype=complex) / d)


# --------------------------------------------------------------------------
# Tensor plumbing


def embed(op: DenseOperator, target_support: Sequence[QubitId]) -> DenseOperator:
    """Tensor ``op`` with identities so that it acts on ``target_support``."""
    target = _check_support(target_support)
    if not set(op.support) <= set(target):
        raise SupportError("support mismatch")
    rest = [q for q in target if q not in op.support]
    mat = np.kron(np.eye(1 << len(rest), dtype=complex), op.matrix)
    return DenseOperator(target, permute_legs(mat, op.support + tuple(rest), target))


def partial_trace(op: DenseOperator, keep: Iterable[QubitId]) -> DenseOperator:
    """Trace out every qubit not in ``keep``; kept legs retain their order."""
    keep = set(keep)
    if not keep <= set(op.support):
        raise SupportError("keep is not a subset of the support")
    kept = tuple(q for q in op.support if q in keep)
    gone = tuple(q for q in op.support if q not in keep)
    if not gone:
        return op
    m = permute_legs(op.matrix, op.support, kept + gone)
    dk, dg = 1 << len(kept), 1 << len(gone)
    m = np.trace(m.reshape(dg, dk, dg, dk), axis1=0, axis2=2)
    cls = type(op) if isinstance(op, DensityMatrix) else DenseOperator
    if cls is DensityMatrix:
        return DensityMatrix.trusted(kept, m)
    return DenseOperator(kept, m)


def operator_norm(op: DenseOperator | np.ndarray) -> float:
    """Largest singular value, from the eigenvalues of O†O."""
    m = op.matrix if isinstance(op, DenseOperator) else np.asarray(op)
    if m.size == 0:
        return 0.0
    ev = np.linalg.eigvalsh(m.conj().T @ m)
    return float(np.sqrt(max(ev[-1], 0.0)))


def trace_norm(op: DenseOperator | np.ndarray) -> float:
    """Sum of singular values."""
    m = op.matrix if isinstance(op, DenseOperator) else np.asarray(op)
    ev = np.linalg.eigvalsh(m.conj().T @ m)
    return float(np.sqrt(np.clip(ev, 0.0, None)).sum())


# --------------------------------------------------------------------------
# Channels


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """CPTP map in Kraus form from ``domain`` to ``codomain``.

    Qubits outside the domain are untouched.  Qubits in the domain but not the
    codomain are discarded; qubits in the codomain but not the domain are
    created.
    """

    kraus: tuple[np.ndarray, ...]
    domain: tuple[QubitId, ...]
    codomain: tuple[QubitId, ...]
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        kraus = tuple(np.asarray(k, dtype=complex) for k in self.kraus)
        dom, cod = _check_support(self.domain), _check_support(self.codomain)
        shape = (1 << len(cod), 1 << len(dom))
        for k in kraus:
            if k.shape != shape:
                raise SupportError(f"Kraus shape {k.shape} != {shape}")
        object.__setattr__(self, "kraus", kraus)
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "codomain", cod)
        if self.check:
            s = sum(k.conj().T @ k for k in kraus)
            if np.abs(s - np.eye(shape[1])).max() > ATOL:
                raise ValueError("Kraus operators are not trace preserving")

    def superoperator(self) -> np.ndarray:
        """Column-stacking superoperator: vec(T(ρ)) = S vec(ρ)."""
        return sum(np.kron(k.conj(), k) for k in self.kraus)

    def choi(self) -> np.ndarray:
        d = 1 << len(self.domain)
        omega = np.zeros((d * d,), dtype=complex)
        omega[:: d + 1] = 1.0
        vecs = [np.kron(np.eye(d), k) @ omega for k in self.kraus]  # unnormalized
        return sum(np.outer(v, v.conj()) for v in vecs)

    def then(self, other: QuantumChannel) -> QuantumChannel:
        """Sequential composition ``other ∘ self`` (requires matching registers)."""
        if set(other.domain) != set(self.codomain):
            raise SupportError("composition registers do not match")
        ks = []
        for b in other.kraus:
            b = b @ permutation_matrix(self.codomain, other.domain)
            ks.extend(b @ a for a in self.kraus)
        return QuantumChannel(tuple(ks), self.domain, other.codomain)


@dataclass(frozen=True, eq=False)
class DualChannel:
    """Hilbert–Schmidt adjoint of a channel (unital, completely positive).

    ``domain`` is the register the observable lives on (the channel's
    codomain); ``codomain`` is where the pulled-back observable lives.
    """

    kraus: tuple[np.ndarray, ...]
    domain: tuple[QubitId, ...]
    codomain: tuple[QubitId, ...]


def _apply_kraus(kraus, domain, codomain, op: DenseOperator, out_support=None) -> np.ndarray:
    if not set(domain) <= set(op.support):
        raise SupportError("channel domain is not contained in the operator support")
    rest = tuple(q for q in op.support if q not in domain)
    m = permute_legs(op.matrix, op.support, tuple(domain) + rest)
    dr, dd = 1 << len(rest), 1 << len(domain)
    t = m.reshape(dr, dd, dr, dd)
    out = 0
    for k in kraus:
        out = out + np.einsum("ij,ajbk,lk->aibl", k, t, k.conj(), optimize=True)
    dc = 1 << len(codomain)
    out = np.asarray(out).reshape(dr * dc, dr * dc)
    natural = tuple(codomain) + rest
    if out_support is None:
        out_support = natural
    return out_support, permute_legs(out, natural, out_support)


def _output_support(domain, codomain, support):
    if set(domain) == set(codomain):
        return tuple(support)
    return tuple(q for q in support if q not in domain) + tuple(codomain)


def apply_channel(ch: QuantumChannel, rho: DensityMatrix | DenseOperator) -> DensityMatrix:
    """Schrödinger action, with identity on qubits outside the domain."""
    sup, m = _apply_kraus(ch.kraus, ch.domain, ch.codomain, rho,
                          _output_support(ch.domain, ch.codomain, rho.support))
    return DensityMatrix.trusted(sup, m)


def dual_channel(ch: QuantumChannel) -> DualChannel:
    return DualChannel(tuple(k.conj().T for k in ch.kraus), ch.codomain, ch.domain)


def apply_dual(dual: DualChannel, op: DenseOperator) -> DenseOperator:
    """Heisenberg action ``O -> Σ K† O K`` (identity elsewhere).

    If ``op`` does not cover the dual's domain it is first padded with
    identities.
    """
    if not set(dual.domain) <= set(op.support):
        op = embed(op, op.support + tuple(q for q in dual.domain if q not in op.support))
    sup, m = _apply_kraus(dual.kraus, dual.domain, dual.codomain, op,
                          _output_support(dual.domain, dual.codomain, op.support))
    return DenseOperator(sup, m)


def unitary_channel(u: np.ndarray, support: Sequence[QubitId]) -> QuantumChannel:
    return QuantumChannel((np.asarray(u, dtype=complex),), tuple(support), tuple(support))


def append_state_channel(omega: DensityMatrix, domain: Sequence[QubitId]) -> QuantumChannel:
    """``ρ -> ρ ⊗ ω`` from ``domain`` to ``domain + omega.support``."""
    domain = tuple(domain)
    evals, evecs = np.linalg.eigh(omega.matrix)
    dd = 1 << len(domain)
    ks = []
    for lam, v in zip(evals, evecs.T):
        if lam > 1e-15:
            # |v> on the new (slower) legs, identity on the domain (faster) legs
            ks.append(np.sqrt(lam) * np.kron(v.reshape(-1, 1), np.eye(dd)))
    return QuantumChannel(tuple(ks), domain, domain + omega.support)


def trace_out_channel(domain: Sequence[QubitId], discard: Sequence[QubitId]) -> QuantumChannel:
    """``ρ -> Tr_discard ρ``."""
    domain = tuple(domain)
    keep = tuple(q for q in domain if q not in discard)
    gone = tuple(q for q in domain if q in discard)
    dk, dg = 1 << len(keep), 1 << len(gone)
    ks = []
    for j in range(dg):
        e = np.zeros((1, dg))
        e[0, j] = 1
        k = np.kron(e, np.eye(dk))  # acts on legs keep + gone
        ks.append(k @ permutation_matrix(domain, keep + gone))
    return QuantumChannel(tuple(ks), domain, keep)


def depolarizing_projector(support: Sequence[QubitId]) -> QuantumChannel:
    """Completely depolarizing channel Φ(ρ) = Tr[ρ] I / 2^n."""
    support = tuple(support)
    if not support:
        raise SupportError("empty support")
    n = len(support)
    ks = [kron_all([PAULI_MATRICES[c] for c in p]) / (1 << n)
          for p in itertools.product("IXYZ", repeat=n)]
    return QuantumChannel(tuple(ks), support, support)


def random_channel(rng: np.random.Generator, domain: Sequence[QubitId],
                   codomain: Sequence[QubitId] | None = None, rank: int = 3) -> QuantumChannel:
    """Random CPTP map via a random isometry (for tests and noise families).

    ``rank`` is raised to ``ceil(din / dout)`` when smaller, the least Kraus
    rank a trace-preserving map into a smaller space can have.
    """
    domain = tuple(domain)
    codomain = domain if codomain is None else tuple(codomain)
    din, dout = 1 << len(domain), 1 << len(codomain)
    rank = max(rank, -(-din // dout))
    g = rng.normal(size=(rank * dout, din)) + 1j * rng.normal(size=(rank * dout, din))
    q, _ = np.linalg.qr(g)
    return QuantumChannel(tuple(q[i * dout:(i + 1) * dout] for i in range(rank)), domain, codomain)


def random_density(rng: np.random.Generator, support: Sequence[QubitId], rank: int | None = None) -> DensityMatrix:
    d = 1 << len(support)
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return DensityMatrix(tuple(support), m / np.trace(m))


def random_operator(rng: np.random.Generator, support: Sequence[QubitId], hermitian: bool = False) -> DenseOperator:
    d = 1 << len(support)
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    if hermitian:
        m = m + m.conj().T
    return DenseOperator(tuple(support), m)


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    d = 1 << n
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


# --------------------------------------------------------------------------
# Pauli strings


@dataclass(frozen=True, eq=False)
class PauliString:
    """Tensor product of Pauli letters with a phase in {±1, ±i}."""

    letters: Mapping[QubitId, str]
    sign: complex = 1

    def __post_init__(self):
        letters = {q: c for q, c in dict(self.letters).items() if c != "I"}
        if any(c not in "XYZ" for c in letters.values()):
            raise ValueError("Pauli letters must be I, X, Y or Z")
        if self.sign not in (1, -1, 1j, -1j):
            raise ValueError("sign must be one of ±1, ±i")
        object.__setattr__(self, "letters", dict(sorted(letters.items())))

    @property
    def support(self) -> tuple[QubitId, ...]:
        return tuple(self.letters)

    @property
    def weight(self) -> int:
        return len(self.letters)

    def to_operator(self, support: Sequence[QubitId] | None = None) -> DenseOperator:
        sup = self.support if support is None else tuple(support)
        if not set(self.letters) <= set(sup):
            raise SupportError("support mismatch")
        mat = kron_all([PAULI_MATRICES[self.letters.get(q, "I")] for q in sup])
        return DenseOperator(sup, self.sign * mat)

    def __str__(self) -> str:
        s = {1: "+", -1: "-", 1j: "+i", -1j: "-i"}[self.sign]
        return s + "*".join(f"{c}[{q}]" for q, c in self.letters.items())

    def __eq__(self, other) -> bool:
        return isinstance(other, PauliString) and self.letters == other.letters and self.sign == other.sign

    def __hash__(self) -> int:
        return hash((tuple(self.letters.items()), self.sign))


def pauli_basis(support: Sequence[QubitId]) -> list[PauliString]:
    """All 4^n Pauli strings on ``support`` (identity first)."""
    support = tuple(support)
    return [PauliString(dict(zip(support, p))) for p in itertools.product("IXYZ", repeat=len(support))]
