"""Local expectation values of the prepared 2D state.

Both pictures run on a :class:`~hqs.live.LiveRegister` that only holds qubits
which are currently alive:

* Schrödinger (:func:`expectation_local`): the bath is evolved row by row; a
  preparation happens right before a qubit's first gate and sink/ancilla
  qubits (and system qubits the observable does not touch) are traced out right
  after their last gate.
* Heisenberg (:func:`expectation_heisenberg`, :func:`heisenberg_pullback`): the
  observable is pulled back through the transitions in reverse; a gate acting
  only on identity legs is skipped (dual channels are unital), a qubit is
  tensored in as identity when a gate first needs it, and contracted with its
  initial state once the backward sweep reaches its preparation.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .circuits import NoiseSpec, PreparationPlan, TransitionMap, noisy_pauli, noisy_plan
from .core import (
    DenseOperator,
    DensityMatrix,
    PauliString,
    QubitId,
    Register,
    SupportError,
    partial_trace,
)
from .live import CeilingError, LiveRegister

__all__ = [
    "CeilingError",
    "LocalObservable",
    "deviation",
    "evolve_bath",
    "expectation_heisenberg",
    "expectation_local",
    "forward_peak",
    "heisenberg_pullback",
    "noisy_expectation",
    "pullback_window",
    "run_backward",
    "run_forward",
    "transition_superoperator",
    "trim_identity",
]


@dataclass(frozen=True, eq=False)
class LocalObservable:
    """A Pauli observable on system sites ``system(row, col)``.

    The lattice window is ``[first_row, last_row]``; ``radius`` is the smallest
    r with the support inside a ball of radius r (grid distance) around
    ``center``.
    """

    pauli: PauliString

    def __post_init__(self):
        if not self.pauli.letters:
            raise ValueError("observable must act on at least one site")
        if any(q.register is not Register.SYSTEM for q in self.pauli.support):
            raise SupportError("observables live on system qubits")

    @property
    def rows(self) -> list[int]:
        return sorted({q.row for q in self.pauli.support})

    @property
    def first_row(self) -> int:
        return self.rows[0]

    @property
    def last_row(self) -> int:
        return self.rows[-1]

    @cached_property
    def center(self) -> QubitId:
        sup = self.pauli.support
        return min(sup, key=lambda c: max(abs(c.row - q.row) + abs(c.col - q.col) for q in sup))

    @property
    def radius(self) -> int:
        c = self.center
        return max(abs(c.row - q.row) + abs(c.col - q.col) for q in self.pauli.support)

    def operator(self) -> DenseOperator:
        return self.pauli.to_operator()

    @classmethod
    def from_sites(cls, letters: str, sites: Sequence[tuple[int, int]]) -> LocalObservable:
        """``letters[i]`` on ``system(row_i, col_i)``; a single letter is broadcast."""
        from .core import system

        if len(letters) == 1:
            letters = letters * len(sites)
        return cls(PauliString({system(r, c): a for a, (r, c) in zip(letters, sites)}))


def _as_operator(obs) -> DenseOperator:
    if isinstance(obs, LocalObservable):
        return obs.operator()
    if isinstance(obs, PauliString):
        return obs.to_operator()
    return obs


def _needed_rows(op: DenseOperator, ly: int) -> int:
    rows = [q.row for q in op.support if q.register is Register.SYSTEM]
    if any(q.register not in (Register.SYSTEM,) for q in op.support):
        raise SupportError("observable must be supported on system rows")
    last = max(rows)
    if not 1 <= min(rows) or last > ly:
        raise ValueError(f"observable rows {sorted(set(rows))} outside [1, {ly}]")
    return last


# --------------------------------------------------------------------------
# One transition in either picture


def _last_use(tm: TransitionMap) -> dict[QubitId, int]:
    last = {}
    for k, g in enumerate(tm.circuit.gates()):
        for q in g.qubits:
            last[q] = k
    return last


def _first_use(tm: TransitionMap) -> dict[QubitId, int]:
    first = {}
    for k, g in enumerate(tm.circuit.gates()):
        for q in g.qubits:
            first.setdefault(q, k)
    return first


def run_forward(reg: LiveRegister, tm: TransitionMap, keep: Iterable[QubitId] | None = None) -> None:
    """Schrödinger step through ``tm``; system qubits outside ``keep`` are traced out.

    ``keep=None`` keeps the whole system row.
    """
    keep = set(tm.system) if keep is None else set(keep) & set(tm.system)
    prepared = set(tm.system) | set(tm.sink)
    last = _last_use(tm)
    missing = [q for q in tm.bath if q not in reg]
    if missing:
        raise SupportError(f"bath qubits {missing} are not live")
    for k, g in enumerate(tm.circuit.gates()):
        for q in g.qubits:
            if q not in reg:
                reg.add(q, tm.initial_factor(q))
        if g.is_noisy:
            reg.apply_superop(g.superop, g.qubits)
        else:
            reg.conjugate(g.ideal, g.qubits)
        for q in g.qubits:
            if last[q] == k and q in prepared and q not in keep:
                reg.remove(q)
    for q in tm.system:
        if q in keep and q not in reg:
            reg.add(q, tm.initial_factor(q))


def run_backward(reg: LiveRegister, tm: TransitionMap) -> None:
    """Heisenberg step: replaces the held operator O by T*(O)."""
    prepared = set(tm.system) | set(tm.sink)
    first = _first_use(tm)
    gates = tm.circuit.gates()
    for k in range(len(gates) - 1, -1, -1):
        g = gates[k]
        if not any(q in reg for q in g.qubits):
            continue
        for q in g.qubits:
            if q not in reg:
                reg.add(q, np.eye(2))
        if g.is_noisy:
            reg.apply_superop(g.dual_superop, g.qubits)
        else:
            reg.conjugate(g.ideal, g.qubits, heisenberg=True)
        for q in g.qubits:
            if first[q] == k and q in prepared:
                reg.remove(q, tm.initial_factor(q))
    for q in list(reg.qubits):
        if q in prepared:
            reg.remove(q, tm.initial_factor(q))


def forward_peak(plan: PreparationPlan, support: Iterable[QubitId]) -> int:
    """Largest live-register size :func:`expectation_local` reaches, without any arithmetic."""
    keep = set(support)
    last_row = max(q.row for q in keep)
    live = set(plan.bath)
    peak = len(live)
    for tm in plan.transitions[:last_row]:
        prepared = set(tm.system) | set(tm.sink)
        last = _last_use(tm)
        for k, g in enumerate(tm.circuit.gates()):
            live.update(g.qubits)
            peak = max(peak, len(live))
            for q in g.qubits:
                if last[q] == k and q in prepared and q not in keep:
                    live.discard(q)
        live.update(q for q in tm.system if q in keep)
        peak = max(peak, len(live))
    return peak


# --------------------------------------------------------------------------
# Public operations


def evolve_bath(plan: PreparationPlan, upto_t: int, ceiling: int | None = None) -> DensityMatrix:
    """Bath state after transitions 1..upto_t (system rows traced out)."""
    if not 0 <= upto_t <= plan.ly:
        raise ValueError(f"upto_t={upto_t} outside [0, {plan.ly}]")
    reg = LiveRegister(ceiling)
    for q, m in plan.rho_bath_init.factors.items():
        reg.add(q, m)
    for tm in plan.transitions[:upto_t]:
        run_forward(reg, tm, keep=())
    return DensityMatrix.trusted(*_support_matrix(reg.to_operator(plan.bath)))


def _support_matrix(op: DenseOperator):
    return op.support, op.matrix


def _real(value: complex, hermitian: bool) -> float | complex:
    if hermitian:
        if abs(value.imag) > 1e-10:
            raise ArithmeticError(f"expectation of a Hermitian observable has imaginary part {value.imag:.3g}")
        return float(value.real)
    return value


def expectation_local(plan: PreparationPlan, obs, ceiling: int | None = None) -> float:
    """Tr[ρ O] by windowed Schrödinger evolution.

    Only the bath and the observable's own qubits are retained; rows after the
    observable's last row are never simulated (their transitions act trivially
    on it).
    """
    op = _as_operator(obs)
    last = _needed_rows(op, plan.ly)
    keep = set(op.support)
    reg = LiveRegister(ceiling)
    for q, m in plan.rho_bath_init.factors.items():
        reg.add(q, m)
    for tm in plan.transitions[:last]:
        run_forward(reg, tm, keep=keep)
    for q in plan.bath:
        reg.remove(q)
    rho = reg.to_operator(op.support)
    value = complex(np.sum(rho.matrix * op.matrix.T))
    return _real(value, op.is_hermitian(1e-12))


def pullback_window(plan: PreparationPlan, op: DenseOperator, t_first: int, t_last: int,
                    ceiling: int | None = None) -> LiveRegister:
    """Apply T*_{t_first} ∘ ... ∘ T*_{t_last} to ``op`` and return the register."""
    reg = LiveRegister.from_operator(op, ceiling)
    for tm in reversed(plan.transitions[t_first - 1:t_last]):
        run_backward(reg, tm)
    return reg


def expectation_heisenberg(plan: PreparationPlan, obs, ceiling: int | None = None) -> float:
    """Tr[ρ^B T*_{[1,t]}(O)] — full Heisenberg evaluation."""
    op = _as_operator(obs)
    last = _needed_rows(op, plan.ly)
    reg = pullback_window(plan, op, 1, last, ceiling)
    for q in list(reg.qubits):
        reg.remove(q, plan.rho_bath_init.factors[q])
    return _real(reg.scalar(), op.is_hermitian(1e-12))


def trim_identity(op: DenseOperator, atol: float = 1e-10) -> DenseOperator:
    """Drop tensor factors on which ``op`` acts as the identity."""
    cur = op
    for q in op.support:
        if cur.num_qubits == 0:
            break
        rest = [p for p in cur.support if p != q]
        red = partial_trace(cur, rest).scale(0.5)
        from .core import embed

        if np.abs(embed(red, cur.support).matrix - cur.matrix).max() <= atol:
            cur = red
    return cur


def heisenberg_pullback(op: DenseOperator, tm: TransitionMap, trim: bool = True,
                        ceiling: int | None = None) -> DenseOperator:
    """T*(op) for one transition, restricted to its true support when ``trim``."""
    if not set(op.support) <= set(tm.bath) | set(tm.system):
        raise SupportError("operator must live on the transition's codomain")
    reg = LiveRegister.from_operator(op, ceiling)
    run_backward(reg, tm)
    out = reg.to_operator()
    return trim_identity(out) if trim else out


def transition_superoperator(tm: TransitionMap, ceiling: int | None = None) -> np.ndarray:
    """Matrix S with S[(o, o'), (i, i')] = <o|T(|i><i'|)|o'> on bath -> bath+system."""
    nin = len(tm.bath)
    din = 1 << nin
    dout = 1 << len(tm.codomain)
    sop = np.zeros((dout * dout, din * din), dtype=complex)
    for i in range(din):
        for j in range(din):
            e = np.zeros((din, din), dtype=complex)
            e[i, j] = 1
            reg = LiveRegister.from_operator(DenseOperator(tm.bath, e), ceiling)
            run_forward(reg, tm)
            sop[:, i * din + j] = reg.to_operator(tm.codomain).matrix.reshape(-1)
    return sop


def deviation(plan: PreparationPlan, obs, spec: NoiseSpec, *, noiseless: float | None = None,
              ceiling: int | None = None) -> float:
    """|Tr[ρ O] − Tr[ρ̃ Õ]| with all transitions, ρ^B and O made noisy by ``spec``."""
    if isinstance(obs, LocalObservable):
        pauli = obs.pauli
    elif isinstance(obs, PauliString):
        pauli = obs
    else:
        raise TypeError("deviation needs a Pauli observable")
    clean = expectation_local(plan, pauli, ceiling) if noiseless is None else noiseless
    noisy = expectation_local(noisy_plan(plan, spec), noisy_pauli(pauli, spec), ceiling)
    return abs(clean - noisy)


def noisy_expectation(plan: PreparationPlan, pauli: PauliString, spec: NoiseSpec,
                      ceiling: int | None = None) -> float:
    return expectation_local(noisy_plan(plan, spec), noisy_pauli(pauli, spec), ceiling)
