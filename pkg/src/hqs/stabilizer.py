"""Stabilizer-tableau oracle: exact Clifford simulation and Pauli-frame Monte Carlo.

The tableau keeps destabilizers (rows ``0..n-1``) and stabilizers (rows
``n..2n-1``) as binary symplectic rows with a sign bit, and is updated by the
usual conjugation rules.  Whole preparation plans are simulated in purified
form: every prepared qubit (system rows, sink rows, ancillas) gets its own
tableau column, so discarding a qubit is just not looking at it again.
"""

from __future__ import annotations

import csv
import io
import itertools
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import kernels
from .circuits import PreparationPlan, TransitionMap, logical_z, strip_generators
from .core import PauliString, QubitId, projector


class NonCliffordError(ValueError):
    """A gate or preparation has no stabilizer description."""


class StabilizerTableau:
    """n-qubit stabilizer state in destabilizer/stabilizer form, initialized to |0…0>."""

    def __init__(self, n: int):
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=np.uint8)
        self.z = np.zeros((2 * n, n), dtype=np.uint8)
        self.r = np.zeros(2 * n, dtype=np.uint8)
        idx = np.arange(n)
        self.x[idx, idx] = 1  # destabilizers X_i
        self.z[n + idx, idx] = 1  # stabilizers Z_i

    def copy(self) -> StabilizerTableau:
        t = StabilizerTableau.__new__(StabilizerTableau)
        t.n, t.x, t.z, t.r = self.n, self.x.copy(), self.z.copy(), self.r.copy()
        return t

    def _check(self, *qs: int) -> None:
        for q in qs:
            if not 0 <= q < self.n:
                raise IndexError(f"qubit index {q} out of range")

    # -- gates ------------------------------------------------------------

    def h(self, a: int) -> None:
        self._check(a)
        x, z = self.x[:, a].copy(), self.z[:, a].copy()
        self.r ^= x & z
        self.x[:, a], self.z[:, a] = z, x

    def s(self, a: int) -> None:
        self._check(a)
        self.r ^= self.x[:, a] & self.z[:, a]
        self.z[:, a] ^= self.x[:, a]

    def cnot(self, a: int, b: int) -> None:
        self._check(a, b)
        if a == b:
            raise ValueError("CNOT needs two distinct qubits")
        xa, za, xb, zb = self.x[:, a], self.z[:, a], self.x[:, b], self.z[:, b]
        self.r ^= xa & zb & (xb ^ za ^ 1)
        self.x[:, b] ^= xa
        self.z[:, a] ^= zb

    def swap(self, a: int, b: int) -> None:
        self._check(a, b)
        self.x[:, [a, b]] = self.x[:, [b, a]]
        self.z[:, [a, b]] = self.z[:, [b, a]]

    def pauli_x(self, a: int) -> None:
        self.r ^= self.z[:, a]

    def pauli_z(self, a: int) -> None:
        self.r ^= self.x[:, a]

    def apply(self, gate: str, qubits: Sequence[int]) -> None:
        """Apply a named Clifford gate (CNOT control first)."""
        ops = {"CNOT": self.cnot, "H": self.h, "S": self.s, "SWAP": self.swap}
        if gate not in ops:
            raise NonCliffordError(f"gate {gate!r} is not supported by the tableau")
        ops[gate](*qubits)

    # -- queries ------------------------------------------------------------

    def expectation(self, px: np.ndarray, pz: np.ndarray, sign: int = 1) -> int:
        return sign * kernels.stabilizer_expectation(self.x, self.z, self.r, px, pz)

    def check_invariants(self) -> None:
        """Symplectic form: stabilizers commute, destabilizer i pairs with stabilizer i."""
        n = self.n
        form = ((self.x.astype(np.int64) @ self.z.T.astype(np.int64))
                + (self.z.astype(np.int64) @ self.x.T.astype(np.int64))) % 2
        expected = np.zeros((2 * n, 2 * n), dtype=np.int64)
        expected[np.arange(n), n + np.arange(n)] = 1
        expected[n + np.arange(n), np.arange(n)] = 1
        if not np.array_equal(form, expected):
            raise AssertionError("tableau symplectic invariants violated")

    def stabilizers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.n
        return self.x[n:].copy(), self.z[n:].copy(), self.r[n:].copy()


def pauli_bits(P: PauliString, index: dict[QubitId, int], n: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Symplectic bits and ±1 sign of a Hermitian Pauli string (Y = i·X·Z)."""
    px = np.zeros(n, dtype=np.uint8)
    pz = np.zeros(n, dtype=np.uint8)
    for q, c in P.letters.items():
        if q not in index:
            raise KeyError(f"{q} is not a tableau qubit")
        px[index[q]] = c in "XY"
        pz[index[q]] = c in "ZY"
    if P.sign not in (1, -1):
        raise ValueError("only Hermitian Pauli strings have ±1 expectations")
    return px, pz, int(P.sign.real)


# --------------------------------------------------------------------------
# Whole-plan simulation


@dataclass
class PlanSimulation:
    tableau: StabilizerTableau
    index: dict[QubitId, int]
    lx: int
    ly: int

    def expectation(self, P: PauliString) -> int:
        return pauli_expectation(self, P)


def _prep_ops(label: str) -> list[str]:
    return {"0": [], "1": ["X"], "+": ["H"], "-": ["X", "H"]}[label]


def _label_of(m: np.ndarray) -> str:
    for lab in "01+-":
        if np.allclose(m, projector(lab), atol=1e-12):
            return lab
    raise NonCliffordError("preparation is not a stabilizer state")


def _plan_qubits(plan: PreparationPlan) -> dict[QubitId, int]:
    index: dict[QubitId, int] = {}
    for q in plan.bath:
        index[q] = len(index)
    for tm in plan.transitions:
        for q in tm.system + tm.sink:
            if q in index:
                raise ValueError(f"qubit {q} is prepared twice")
            index[q] = len(index)
    return index


def _prepare(tab: StabilizerTableau, i: int, label: str) -> None:
    for op in _prep_ops(label):
        tab.pauli_x(i) if op == "X" else tab.h(i)


def simulate_plan(plan: PreparationPlan, check: bool = False) -> PlanSimulation:
    """Exact noiseless simulation of a Clifford plan (purified, no resets)."""
    index = _plan_qubits(plan)
    tab = StabilizerTableau(len(index))
    for q, m in plan.rho_bath_init.factors.items():
        _prepare(tab, index[q], _label_of(m))
    for tm in plan.transitions:
        _run_transition(tab, tm, index)
        if check:
            tab.check_invariants()
    return PlanSimulation(tab, index, plan.lx, plan.ly)


def _run_transition(tab: StabilizerTableau, tm: TransitionMap, index) -> None:
    for q in tm.system + tm.sink:
        _prepare(tab, index[q], _label_of(tm.initial_factor(q)))
    for g in tm.circuit.gates():
        if not g.is_clifford or g.is_noisy:
            raise NonCliffordError(f"gate {g.name} is not an ideal Clifford gate")
        tab.apply(g.name, [index[q] for q in g.qubits])


def pauli_expectation(sim: PlanSimulation | tuple[StabilizerTableau, dict], P: PauliString) -> int:
    """⟨P⟩ ∈ {+1, −1, 0} on the simulated state."""
    tab, index = (sim.tableau, sim.index) if isinstance(sim, PlanSimulation) else sim
    px, pz, sign = pauli_bits(P, index, tab.n)
    return tab.expectation(px, pz, sign)


def simulate_text(text: str) -> PlanSimulation:
    """Simulate a plan given in the circuit text format."""
    from .circuits import parse_circuit_text

    plan = parse_circuit_text(text)
    if not isinstance(plan, PreparationPlan):
        raise ValueError("text does not describe a full plan")  # noqa: TRY004 - malformed input, not a type error
    return simulate_plan(plan)


# --------------------------------------------------------------------------
# Reduced states


def reduced_stabilizer_group(sim: PlanSimulation, qubits: Sequence[QubitId]) -> list[tuple[str, int]]:
    """Generators (as letter strings over ``qubits`` and signs) of the stabilizer
    subgroup supported on ``qubits``; obtained by Gaussian elimination that
    clears every column outside the region."""
    tab = sim.tableau
    n = tab.n
    region = [sim.index[q] for q in qubits]
    outside = [i for i in range(n) if i not in set(region)]
    sx, sz, _ = tab.stabilizers()
    m = np.concatenate([sx[:, outside], sz[:, outside], sx[:, region], sz[:, region]], axis=1)
    pivot_row = 0
    for col in range(2 * len(outside)):
        hit = [r for r in range(pivot_row, n) if m[r, col]]
        if not hit:
            continue
        r0 = hit[0]
        m[[pivot_row, r0]] = m[[r0, pivot_row]]
        for r in range(n):
            if r != pivot_row and m[r, col]:
                m[r] ^= m[pivot_row]
        pivot_row += 1
    k = len(region)
    out = []
    for r in range(pivot_row, n):
        bits_x, bits_z = m[r, 2 * len(outside):2 * len(outside) + k], m[r, 2 * len(outside) + k:]
        if not (bits_x.any() or bits_z.any()):
            continue
        letters = "".join("IXZY"[int(bx) + 2 * int(bz)] for bx, bz in zip(bits_x, bits_z))
        P = PauliString(dict(zip(qubits, letters)))
        out.append((letters, pauli_expectation(sim, P)))
    return out


def reduced_density_matrix(sim: PlanSimulation, qubits: Sequence[QubitId]) -> np.ndarray:
    """ρ_A = 2^-k Σ_P ⟨P⟩ P over all Paulis on ``qubits`` (little-endian)."""
    from .core import PAULI_MATRICES, kron_all

    k = len(qubits)
    rho = np.zeros((1 << k, 1 << k), dtype=complex)
    for letters in itertools.product("IXYZ", repeat=k):
        P = PauliString(dict(zip(qubits, letters)))
        v = pauli_expectation(sim, P) if P.letters else 1
        if v:
            rho += v * kron_all([PAULI_MATRICES[c] for c in letters])
    return rho / (1 << k)


# --------------------------------------------------------------------------
# Row annihilation


@dataclass
class AnnihilationReport:
    lx: int
    candidates: int
    survivors: list[str]

    @property
    def ok(self) -> bool:
        return sorted(self.survivors) == sorted(["I" * self.lx, "Z" * self.lx])


def check_row_annihilation(lx: int) -> AnnihilationReport:
    """Row Paulis that commute with every generator of the two strips around a bulk row.

    Any row Pauli that anticommutes with one of those generators is mapped to 0
    by the dual of a bulk transition; the survivors must be the identity and
    the logical Z string.
    """
    if lx < 3 or lx % 2 == 0:
        raise ValueError("lx must be odd and >= 3")
    y = 2  # any bulk row; generator patterns alternate with period 2 in y
    gens = strip_generators(lx, y - 1) + strip_generators(lx, y)
    # restriction of each generator to row y, as symplectic bits
    gx = np.zeros((len(gens), lx), dtype=np.uint8)
    gz = np.zeros((len(gens), lx), dtype=np.uint8)
    for i, g in enumerate(gens):
        for x, yy in g.sites:
            if yy == y:
                (gx if g.kind == "X" else gz)[i, x] = 1
    # all 4^lx Paulis, digit d in {0:I,1:X,2:Z,3:Y}
    codes = np.arange(4 ** lx)
    digits = (codes[:, None] // (4 ** np.arange(lx))[None, :]) % 4
    px = (digits & 1).astype(np.uint8)
    pz = ((digits >> 1) & 1).astype(np.uint8)
    anti = ((px.astype(np.int64) @ gz.T.astype(np.int64)) + (pz.astype(np.int64) @ gx.T.astype(np.int64))) % 2
    alive = ~anti.any(axis=1)
    survivors = ["".join("IXZY"[d] for d in digits[i]) for i in np.flatnonzero(alive)]
    return AnnihilationReport(lx, 4 ** lx - 2, survivors)


# --------------------------------------------------------------------------
# Pauli-frame Monte Carlo


@dataclass
class MonteCarloResult:
    mean: float
    stderr: float
    shots: int
    ideal: int


def monte_carlo_pauli_noise(plan: PreparationPlan, p: float, shots: int, observable: PauliString,
                            seed: int = 0, *, prep_flip: float = 0.0, meas_scale: float = 1.0,
                            batch: int = 20000) -> MonteCarloResult:
    """Estimate ⟨P⟩ under independent Pauli faults by Pauli-frame propagation.

    Args:
        plan: Ideal Clifford plan.
        p: Probability of a non-identity Pauli after each gate (uniform over
            the 4^k − 1 non-identity Paulis on the gate's k qubits).
        shots: Number of samples.
        observable: Pauli string to estimate.
        seed: Seed; shot batch ``b`` uses the stream ``(seed, b)``.
        prep_flip: Probability that a preparation is flipped to its orthogonal
            state (bath initialization included).
        meas_scale: Deterministic factor applied to every outcome (e.g.
            ``(1-ε)^weight`` for shrunk measurements).
    """
    sim = simulate_plan(plan)
    ideal = pauli_expectation(sim, observable)
    if p == 0 and prep_flip == 0:
        return MonteCarloResult(meas_scale * ideal, 0.0, shots, ideal)
    if ideal == 0:
        # a Pauli frame maps a stabilizer state to another one with the same
        # zero expectation, so every shot averages to exactly 0
        return MonteCarloResult(0.0, 0.0, shots, ideal)
    index, n = sim.index, sim.tableau.n
    px, pz, _ = pauli_bits(observable, index, n)
    ops = []  # ("prep", i, label) | ("gate", name, idx)
    for q, m in plan.rho_bath_init.factors.items():
        ops.append(("prep", index[q], _label_of(m)))
    for tm in plan.transitions:
        for q in tm.system + tm.sink:
            ops.append(("prep", index[q], _label_of(tm.initial_factor(q))))
        for g in tm.circuit.gates():
            if not g.is_clifford:
                raise NonCliffordError(f"gate {g.name} is not Clifford")
            ops.append(("gate", g.name, tuple(index[q] for q in g.qubits)))
    total = 0.0
    total_sq = 0.0
    done = 0
    b = 0
    while done < shots:
        m = min(batch, shots - done)
        rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
        fx = np.zeros((m, n), dtype=np.uint8)
        fz = np.zeros((m, n), dtype=np.uint8)
        for op in ops:
            if op[0] == "prep":
                _, i, label = op
                if prep_flip:
                    flips = (rng.random(m) < prep_flip).astype(np.uint8)
                    (fx if label in "01" else fz)[:, i] ^= flips
                continue
            _, name, qs = op
            if name == "CNOT":
                a, c = qs
                fx[:, c] ^= fx[:, a]
                fz[:, a] ^= fz[:, c]
            elif name == "SWAP":
                a, c = qs
                fx[:, [a, c]] = fx[:, [c, a]]
                fz[:, [a, c]] = fz[:, [c, a]]
            elif name == "H":
                (a,) = qs
                fx[:, a], fz[:, a] = fz[:, a].copy(), fx[:, a].copy()
            elif name == "S":
                (a,) = qs
                fz[:, a] ^= fx[:, a]
            if p:
                k = len(qs)
                hit = rng.random(m) < p
                which = rng.integers(1, 4 ** k, size=m)
                for j, qi in enumerate(qs):
                    d = (which >> (2 * j)) & 3
                    fx[:, qi] ^= (hit & ((d & 1) == 1)).astype(np.uint8)
                    fz[:, qi] ^= (hit & ((d & 2) == 2)).astype(np.uint8)
        parity = ((fx.astype(np.int64) @ pz.astype(np.int64)) + (fz.astype(np.int64) @ px.astype(np.int64))) % 2
        vals = ideal * meas_scale * (1 - 2 * parity.astype(float))
        total += vals.sum()
        total_sq += (vals ** 2).sum()
        done += m
        b += 1
    mean = total / shots
    var = max(total_sq / shots - mean ** 2, 0.0)
    return MonteCarloResult(float(mean), float(np.sqrt(var / max(shots - 1, 1))), shots, ideal)


def shots_csv(rows: Sequence[dict]) -> str:
    """Shot statistics as CSV (columns shots, mean, stderr, p, lx, ly, observable)."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["shots", "mean", "stderr", "p", "lx", "ly", "observable"],
                       lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def encoding_report(lx: int, ly: int) -> dict:
    """Expectations of every generator and of the logical Z strings."""
    from .circuits import surface_code_generators, surface_code_plan

    sim = simulate_plan(surface_code_plan(lx, ly))
    gens = [pauli_expectation(sim, g.pauli()) for g in surface_code_generators(lx, ly)]
    zbar = [pauli_expectation(sim, logical_z(lx, y)) for y in range(ly)]
    return {"generators": gens, "logical_z": zbar}


__all__ = [
    "AnnihilationReport",
    "MonteCarloResult",
    "NonCliffordError",
    "StabilizerTableau",
    "check_row_annihilation",
    "encoding_report",
    "monte_carlo_pauli_noise",
    "pauli_expectation",
    "reduced_density_matrix",
    "reduced_stabilizer_group",
    "shots_csv",
    "simulate_plan",
    "simulate_text",
]
