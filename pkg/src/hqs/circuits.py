"""Layered circuits, transition maps, circuit families and ε-noise injection.

A :class:`TransitionMap` is the channel from the bath ``B`` to ``B ∪ S_t``
obtained by preparing the system row and the sink (which also holds the
ancillas), running a layered circuit and discarding the sink.  Maps are
immutable; noisy versions are produced by :func:`apply_noise` and keep a
gate-by-gate pairing with the ideal map.
"""

from __future__ import annotations

import enum
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from .core import (
    PAULI_MATRICES,
    DenseOperator,
    DensityMatrix,
    PauliString,
    QuantumChannel,
    QubitId,
    Register,
    SupportError,
    ancilla,
    bath,
    kron_all,
    projector,
    sink,
    system,
)

log = logging.getLogger(__name__)

# --------------------------------------------------------------------------
# Gates

CNOT = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)  # control = qubits[0]
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.diag([1, 1j]).astype(complex)

GATE_MATRICES = {"CNOT": CNOT, "SWAP": SWAP, "H": H, "S": S}
CLIFFORD_GATES = frozenset(GATE_MATRICES)


@dataclass(frozen=True, eq=False)
class Gate:
    """A gate on an ordered tuple of qubits (little-endian; CNOT control first).

    ``kraus`` is ``None`` for the ideal gate; a noisy gate stores its Kraus
    operators together with the certified diamond-norm bound ``certificate``.
    ``unitary`` overrides the named matrix (used for generic test circuits).
    """

    name: str
    qubits: tuple[QubitId, ...]
    unitary: np.ndarray | None = None
    kraus: tuple[np.ndarray, ...] | None = None
    certificate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        if len(set(self.qubits)) != len(self.qubits):
            raise SupportError("gate acts twice on one qubit")
        u = self.ideal
        if u.shape != (1 << len(self.qubits),) * 2:
            raise ValueError(f"gate {self.name} has wrong arity")
        if np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() > 1e-12:
            raise ValueError(f"gate {self.name} is not unitary")

    @property
    def ideal(self) -> np.ndarray:
        if self.unitary is not None:
            return np.asarray(self.unitary, dtype=complex)
        try:
            return GATE_MATRICES[self.name]
        except KeyError:
            raise ValueError(f"unknown gate {self.name!r}") from None

    @property
    def is_noisy(self) -> bool:
        return self.kraus is not None

    @property
    def is_clifford(self) -> bool:
        return self.unitary is None and self.name in CLIFFORD_GATES

    def channel_kraus(self) -> tuple[np.ndarray, ...]:
        return self.kraus if self.kraus is not None else (self.ideal,)

    @cached_property
    def superop(self) -> np.ndarray:
        return sum(np.kron(k.conj(), k) for k in self.channel_kraus())

    @cached_property
    def dual_superop(self) -> np.ndarray:
        return sum(np.kron(k.T, k.conj().T) for k in self.channel_kraus())


@dataclass(frozen=True, eq=False)
class LayeredCircuit:
    """Sequence of layers of gates with pairwise-disjoint supports."""

    layers: tuple[tuple[Gate, ...], ...]

    def __post_init__(self):
        layers = tuple(tuple(layer) for layer in self.layers)
        for i, layer in enumerate(layers):
            seen: set[QubitId] = set()
            for g in layer:
                if seen & set(g.qubits):
                    raise ValueError(f"layer {i}: overlapping gate supports")
                seen |= set(g.qubits)
        object.__setattr__(self, "layers", layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def gates(self) -> list[Gate]:
        return [g for layer in self.layers for g in layer]

    @property
    def qubits(self) -> set[QubitId]:
        return {q for g in self.gates() for q in g.qubits}

    def map_gates(self, fn) -> LayeredCircuit:
        out, k = [], 0
        for layer in self.layers:
            new = []
            for g in layer:
                new.append(fn(k, g))
                k += 1
            out.append(tuple(new))
        return LayeredCircuit(tuple(out))


class CircuitBuilder:
    """Accumulates gates into layers: each gate goes to the first layer after
    every earlier gate on its qubits and after the last :meth:`fence`."""

    def __init__(self):
        self.layers: list[list[Gate]] = []
        self._front: dict[QubitId, int] = {}
        self.barrier = 0

    def add(self, name: str, *qubits: QubitId, unitary: np.ndarray | None = None) -> None:
        g = Gate(name, tuple(qubits), unitary)
        k = max((self._front.get(q, 0) for q in qubits), default=0)
        k = max(k, self.barrier)
        while len(self.layers) <= k:
            self.layers.append([])
        self.layers[k].append(g)
        for q in qubits:
            self._front[q] = k + 1

    def fence(self) -> None:
        """Start a new layer for everything that follows."""
        self.barrier = len(self.layers)

    def build(self) -> LayeredCircuit:
        return LayeredCircuit(tuple(tuple(layer) for layer in self.layers))


# --------------------------------------------------------------------------
# Product states and transition maps


def _as_factor(s) -> np.ndarray:
    if isinstance(s, str):
        return projector(s)
    return np.asarray(s, dtype=complex)


@dataclass(frozen=True, eq=False)
class ProductState:
    """Product of single-qubit density matrices, keyed by qubit."""

    factors: Mapping[QubitId, np.ndarray]

    def __post_init__(self):
        fs = {q: _as_factor(m) for q, m in dict(self.factors).items()}
        for q, m in fs.items():
            if m.shape != (2, 2):
                raise ValueError(f"factor on {q} is not a qubit state")
            DensityMatrix((q,), m)  # validates
        object.__setattr__(self, "factors", fs)

    @property
    def support(self) -> tuple[QubitId, ...]:
        return tuple(self.factors)

    def density(self) -> DensityMatrix:
        sup = self.support
        return DensityMatrix.trusted(sup, kron_all([self.factors[q] for q in sup]))

    @classmethod
    def from_labels(cls, qubits: Sequence[QubitId], labels: str | Sequence) -> ProductState:
        if isinstance(labels, str) and len(labels) == 1:
            labels = labels * len(qubits)
        return cls(dict(zip(qubits, labels)))


@dataclass(frozen=True, eq=False)
class TransitionMap:
    """Channel B -> B ∪ S_t built from initialized system/sink and a circuit.

    Attributes:
        row: Row index ``t`` (1-based).
        bath, system, sink: Register partition (the sink includes ancillas).
        omega_system, omega_sink: Product initial states of system and sink.
        circuit: The layered circuit.
        noise: The spec used to produce this map, ``None`` for an ideal map.
    """

    row: int
    bath: tuple[QubitId, ...]
    system: tuple[QubitId, ...]
    sink: tuple[QubitId, ...]
    omega_system: ProductState
    omega_sink: ProductState
    circuit: LayeredCircuit
    noise: NoiseSpec | None = None

    def __post_init__(self):
        b, s, k = set(self.bath), set(self.system), set(self.sink)
        if (b & s) or (b & k) or (s & k):
            raise SupportError("bath, system and sink must be disjoint")
        if not self.circuit.qubits <= b | s | k:
            raise SupportError("circuit acts outside the partition")
        if set(self.omega_system.support) != s or set(self.omega_sink.support) != k:
            raise SupportError("initial states must cover system and sink exactly")

    @property
    def depth(self) -> int:
        return self.circuit.depth

    @property
    def codomain(self) -> tuple[QubitId, ...]:
        return self.bath + self.system

    def initial_factor(self, q: QubitId) -> np.ndarray:
        if q in self.omega_system.factors:
            return self.omega_system.factors[q]
        return self.omega_sink.factors[q]

    def as_channel(self, max_qubits: int = 8) -> QuantumChannel:
        """Kraus form of the map (dense; only for small instances)."""
        from .engine import (
            transition_superoperator,  # local import: engine depends on circuits
        )

        nin, nout = len(self.bath), len(self.codomain)
        if nin + nout > max_qubits:
            raise MemoryError("transition too large for an explicit Kraus form")
        sop = transition_superoperator(self)
        din, dout = 1 << nin, 1 << nout
        # Choi matrix J[(o,i),(o',i')] = <o|T(|i><i'|)|o'>, reshuffled from the superoperator
        choi = sop.reshape(dout, dout, din, din).transpose(0, 2, 1, 3).reshape(dout * din, dout * din)
        choi = (choi + choi.conj().T) / 2
        w, v = np.linalg.eigh(choi)
        ks = [np.sqrt(lam) * v[:, i].reshape(dout, din) for i, lam in enumerate(w) if lam > 1e-13]
        ch = QuantumChannel(tuple(ks), self.bath, self.codomain, check=False)
        s = sum(k.conj().T @ k for k in ch.kraus)
        if np.abs(s - np.eye(din)).max() > 1e-10:
            raise ValueError("transition is not trace preserving")
        return ch


def build_transition_map(circuit: LayeredCircuit, omega_system: ProductState, omega_sink: ProductState,
                         partition: tuple[Sequence[QubitId], Sequence[QubitId], Sequence[QubitId]],
                         row: int = 1) -> TransitionMap:
    """Assemble a transition map from its parts (validated)."""
    b, s, k = (tuple(x) for x in partition)
    return TransitionMap(row, b, s, k, omega_system, omega_sink, circuit)


# --------------------------------------------------------------------------
# Surface-code lattice

def _check_lx(lx: int) -> None:
    if lx < 3 or lx % 2 == 0:
        raise ValueError("surface-code layout needs odd lx >= 3")


def plaquette_type(x: int, y: int) -> str:
    """Type of bulk plaquette with lower-left corner (x, y), 0-based."""
    return "X" if (x + y) % 2 == 0 else "Z"


@dataclass(frozen=True)
class Stabilizer:
    kind: str  # "X" or "Z"
    sites: tuple[tuple[int, int], ...]  # (x, y) lattice sites, 0-based

    def pauli(self, qubit_of=None) -> PauliString:
        qubit_of = qubit_of or (lambda x, y: system(y + 1, x))
        return PauliString({qubit_of(x, y): self.kind for x, y in self.sites})


def surface_code_generators(lx: int, ly: int) -> list[Stabilizer]:
    """All ``lx*ly - 1`` stabilizer generators (bulk plaquettes + boundary pairs)."""
    _check_lx(lx)
    if ly < 2:
        raise ValueError("ly must be at least 2")
    gens = []
    for y in range(ly - 1):
        gens.extend(strip_generators(lx, y))
    gens.extend(Stabilizer("X", ((x, 0), (x + 1, 0))) for x in range(1, lx - 1, 2))
    gens.extend(Stabilizer("X", ((x, ly - 1), (x + 1, ly - 1)))
                for x in range(lx - 1) if plaquette_type(x, ly - 2) == "Z")
    return gens


def strip_generators(lx: int, y: int) -> list[Stabilizer]:
    """Generators supported on rows (y, y+1): plaquettes and vertical boundary pairs."""
    out = []
    for x in range(lx - 1):
        out.append(Stabilizer(plaquette_type(x, y), ((x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1))))
    if plaquette_type(0, y) == "X":
        out.append(Stabilizer("Z", ((0, y), (0, y + 1))))
    if plaquette_type(lx - 2, y) == "X":
        out.append(Stabilizer("Z", ((lx - 1, y), (lx - 1, y + 1))))
    return out


def logical_z(lx: int, y: int, qubit_of=None) -> PauliString:
    qubit_of = qubit_of or (lambda x, yy: system(yy + 1, x))
    return PauliString({qubit_of(x, y): "Z" for x in range(lx)})


# --------------------------------------------------------------------------
# Stabilizer-setting subroutines (appended to a CircuitBuilder)


class _Ancillas:
    def __init__(self, row: int):
        self.row, self.slot, self.states = row, 0, {}

    def new(self, label: str) -> QubitId:
        q = ancilla(self.row, self.slot)
        self.slot += 1
        self.states[q] = label
        return q


def set_z_stabilizer(cb: CircuitBuilder, anc: _Ancillas, qubits: Sequence[QubitId], correct: QubitId) -> None:
    """Parity into a |0> ancilla, then a controlled-X from it onto ``correct``."""
    a = anc.new("0")
    for q in qubits:
        cb.add("CNOT", q, a)
    cb.add("CNOT", a, correct)


def set_x_stabilizer(cb: CircuitBuilder, anc: _Ancillas, qubits: Sequence[QubitId], correct: QubitId) -> None:
    """CNOTs out of a |+> ancilla, then a CNOT from ``correct`` into it."""
    a = anc.new("+")
    for q in qubits:
        cb.add("CNOT", a, q)
    cb.add("CNOT", correct, a)


def _set_strip(cb, anc, lx, y, old, new, order="XZ", top_pairs=False):
    """Set all generators of strip (y, y+1).

    ``old(x)``/``new(x)`` give the device qubit holding site (x, y)/(x, y+1).
    Plaquette corners are ordered q1=(x,new), q2=(x+1,new), q3=(x,old),
    q4=(x+1,old) and the correction acts on q2, which no previously set
    generator of the same type contains.
    """
    gens = strip_generators(lx, y)
    plaq = {k: [g.sites[0][0] for g in gens if g.kind == k and len(g.sites) == 4] for k in "XZ"}
    vert = [g.sites[0][0] for g in gens if len(g.sites) == 2]
    for kind in order:
        if kind == "X" and top_pairs:
            # top boundary: X plaquettes and top X pairs overlap along the new row,
            # so set them one by one left to right, correcting on the right qubit
            pairs = [x for x in range(lx - 1) if plaquette_type(x, y) == "Z"]
            for x in sorted(plaq["X"] + pairs):
                qs = [new(x), new(x + 1)] + ([old(x), old(x + 1)] if x in plaq["X"] else [])
                set_x_stabilizer(cb, anc, qs, correct=new(x + 1))
                cb.fence()
            continue
        for x in plaq[kind]:
            qs = [new(x), new(x + 1), old(x), old(x + 1)]
            (set_x_stabilizer if kind == "X" else set_z_stabilizer)(cb, anc, qs, correct=new(x + 1))
        if kind == "Z":
            for x in vert:
                set_z_stabilizer(cb, anc, [new(x), old(x)], correct=new(x))
        cb.fence()


def surface_code_transition(lx: int, t: int, ly: int, order: str = "XZ") -> TransitionMap:
    """Transition map for row ``t`` (1-based) of the ``lx x ly`` surface code.

    Step t swaps the bath (holding lattice row t-1) into the freshly initialized
    system row, sets the strip between the system row and the new bath row and,
    for t <= ly-2, sets the next strip between the bath and a sink row so that
    the bath leaves in a state that no longer depends on its input.
    """
    _check_lx(lx)
    if not 1 <= t <= ly:
        raise ValueError(f"row {t} out of range [1, {ly}]")
    if order not in ("XZ", "ZX"):
        raise ValueError("order must be 'XZ' or 'ZX'")
    B = tuple(bath(x) for x in range(lx))
    St = tuple(system(t, x) for x in range(lx))
    K = tuple(sink(t, x) for x in range(lx)) if t <= ly - 2 else ()
    anc = _Ancillas(t)
    cb = CircuitBuilder()
    for x in range(lx):
        cb.add("SWAP", B[x], St[x])
    cb.fence()
    y = t - 1  # lattice row now held by S_t
    if t == 1:
        for x in range(1, lx - 1, 2):
            # bottom boundary pair: the X subroutine restricted to the two row-0 qubits
            set_x_stabilizer(cb, anc, [St[x], St[x + 1]], correct=St[x])
        cb.fence()
    if t <= ly - 2:
        _set_strip(cb, anc, lx, y, old=lambda x: St[x], new=lambda x: B[x], order=order)
        _set_strip(cb, anc, lx, y + 1, old=lambda x: B[x], new=lambda x: K[x], order=order)
    elif t == ly - 1:
        _set_strip(cb, anc, lx, y, old=lambda x: St[x], new=lambda x: B[x], order=order, top_pairs=True)
    circuit = cb.build()
    sink_reg = K + tuple(anc.states)
    return TransitionMap(
        row=t,
        bath=B,
        system=St,
        sink=sink_reg,
        omega_system=ProductState.from_labels(St, "0"),
        omega_sink=ProductState({**{k: "0" for k in K}, **anc.states}),
        circuit=circuit,
    )


def trivial_state_transition(lx: int, t: int, target_row_state: str | Sequence = "0", *,
                             swap: bool = True, bath_unitary: np.ndarray | None = None) -> TransitionMap:
    """Transition that prepares a fixed product row.

    The system row is initialized in ``target_row_state`` and swapped with the
    bath, so the bath input is emitted as row ``t`` and the bath leaves in the
    target state.  With ``swap=False`` (negative control) the system row is
    left alone and ``bath_unitary`` (a two-qubit unitary) is applied to every
    neighbouring bath pair in a brickwork pattern.
    """
    B = tuple(bath(x) for x in range(lx))
    St = tuple(system(t, x) for x in range(lx))
    state = ProductState.from_labels(St, target_row_state)
    cb = CircuitBuilder()
    if swap:
        for x in range(lx):
            cb.add("SWAP", B[x], St[x])
    if bath_unitary is not None:
        cb.fence()
        for start in (0, 1):
            for x in range(start, lx - 1, 2):
                cb.add("U", B[x], B[x + 1], unitary=bath_unitary)
    return TransitionMap(t, B, St, (), state, ProductState({}), cb.build())


# --------------------------------------------------------------------------
# Preparation plans


@dataclass(frozen=True, eq=False)
class PreparationPlan:
    """Transitions for rows 1..ly plus the initial bath state."""

    transitions: tuple[TransitionMap, ...]
    rho_bath_init: ProductState
    noise: NoiseSpec | None = None
    lx: int = 0
    model: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "transitions", tuple(self.transitions))
        if self.transitions:
            b = self.transitions[0].bath
            if any(tm.bath != b for tm in self.transitions):
                raise ValueError("transitions must share one bath register")
            if set(self.rho_bath_init.support) != set(b):
                raise ValueError("initial bath state must cover the bath")
        rows = [tm.row for tm in self.transitions]
        if rows != list(range(1, len(rows) + 1)):
            raise ValueError("transitions must be for rows 1..ly in order")

    @property
    def ly(self) -> int:
        return len(self.transitions)

    @property
    def bath(self) -> tuple[QubitId, ...]:
        return self.transitions[0].bath


def surface_code_plan(lx: int, ly: int, order: str = "XZ") -> PreparationPlan:
    tms = tuple(surface_code_transition(lx, t, ly, order) for t in range(1, ly + 1))
    return PreparationPlan(tms, ProductState.from_labels(tms[0].bath, "0"), lx=lx, model="surface-code")


def trivial_plan(lx: int, ly: int, target_row_state: str | Sequence = "0",
                 bath_init: str | Sequence = "0", **kw) -> PreparationPlan:
    tms = tuple(trivial_state_transition(lx, t, target_row_state, **kw) for t in range(1, ly + 1))
    return PreparationPlan(tms, ProductState.from_labels(tms[0].bath, bath_init), lx=lx, model="trivial")


# --------------------------------------------------------------------------
# Noise


class GateNoise(enum.Enum):
    DEPOLARIZE_AFTER_GATE = "DepolarizeAfterGate"
    COHERENT_OVERROTATION = "CoherentOverrotation"
    MIX_WITH_FIXED_CHANNEL = "MixWithFixedChannel"


class StateNoise(enum.Enum):
    MIX_WITH_ORTHOGONAL = "MixWithOrthogonal"
    MIX_WITH_MAXIMALLY_MIXED = "MixWithMaximallyMixed"


class MeasNoise(enum.Enum):
    SHRINK = "Shrink"
    ROTATE_AXIS = "RotateAxis"


@dataclass(frozen=True)
class NoiseSpec:
    """ε-noise on gates, state preparations and Pauli measurements.

    A family set to ``None`` switches that noise source off.
    """

    epsilon: float
    gate_family: GateNoise | None = GateNoise.DEPOLARIZE_AFTER_GATE
    state_family: StateNoise | None = StateNoise.MIX_WITH_MAXIMALLY_MIXED
    meas_family: MeasNoise | None = MeasNoise.SHRINK
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        for name, enum_cls in (("gate_family", GateNoise), ("state_family", StateNoise),
                               ("meas_family", MeasNoise)):
            v = getattr(self, name)
            if isinstance(v, str):
                object.__setattr__(self, name, enum_cls(v))


def _rng(spec: NoiseSpec, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([spec.seed, *key]))


def _paulis(n: int) -> list[np.ndarray]:
    import itertools
    return [kron_all([PAULI_MATRICES[c] for c in p]) for p in itertools.product("IXYZ", repeat=n)]


def noisy_gate(g: Gate, spec: NoiseSpec, key: tuple[int, ...]) -> Gate:
    """Replace ``g`` by a noisy gate with certified ‖Ũ − U‖⋄ ≤ ε."""
    eps, fam = spec.epsilon, spec.gate_family
    if eps == 0 or fam is None:
        return g
    u = g.ideal
    n = len(g.qubits)
    d = 1 << n
    p = eps / 2
    if fam is GateNoise.DEPOLARIZE_AFTER_GATE:
        # (1-p) U + p Φ∘U with Φ the completely depolarizing channel on the gate qubits
        ps = _paulis(n)
        ks = [np.sqrt(1 - p + p / d**2) * u] + [np.sqrt(p / d**2) * P @ u for P in ps[1:]]
        cert = 2 * p
    elif fam is GateNoise.MIX_WITH_FIXED_CHANNEL:
        rng = _rng(spec, *key)
        from .core import random_channel
        nch = random_channel(rng, g.qubits, rank=2)
        ks = [np.sqrt(1 - p) * u] + [np.sqrt(p) * k @ u for k in nch.kraus]
        cert = 2 * p
    elif fam is GateNoise.COHERENT_OVERROTATION:
        rng = _rng(spec, *key)
        h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = h + h.conj().T
        h /= np.abs(np.linalg.eigvalsh(h)).max()
        theta = 2 * np.arcsin(eps / 4)
        v = expm(-1j * theta * h) @ u
        ks = [v]
        # ‖Ũ−U‖⋄ ≤ 2‖Ṽ−V‖ for unitary channels
        cert = 2 * np.linalg.norm(v - u, 2)
    else:  # pragma: no cover
        raise ValueError(fam)
    if cert > eps * (1 + 1e-9) + 1e-15:
        raise AssertionError(f"noise certificate {cert} exceeds epsilon {eps}")
    log.debug("gate %s on %s: family %s, certified diamond bound %.3g <= %.3g",
              g.name, [str(q) for q in g.qubits], fam.value, cert, eps)
    return Gate(g.name, g.qubits, g.unitary, tuple(ks), cert)


def noisy_state(omega: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Single-qubit ω̃ with ‖ω̃ − ω‖₁ ≤ ε."""
    eps, fam = spec.epsilon, spec.state_family
    if eps == 0 or fam is None:
        return omega
    q = eps / 2
    if fam is StateNoise.MIX_WITH_ORTHOGONAL:
        other = np.eye(2) - omega
    else:
        other = np.eye(2) / 2
    return (1 - q) * omega + q * other


def _noisy_product(ps: ProductState, spec: NoiseSpec) -> ProductState:
    return ProductState({q: noisy_state(m, spec) for q, m in ps.factors.items()})


def apply_noise(tm: TransitionMap, spec: NoiseSpec) -> TransitionMap:
    """Noisy counterpart of ``tm``; ``epsilon == 0`` returns ``tm`` itself."""
    if not isinstance(spec, NoiseSpec):
        raise TypeError("spec must be a NoiseSpec")
    if spec.epsilon == 0:
        return tm
    circuit = tm.circuit.map_gates(lambda k, g: noisy_gate(g, spec, (tm.row, k)))
    return replace(tm, omega_system=_noisy_product(tm.omega_system, spec),
                   omega_sink=_noisy_product(tm.omega_sink, spec), circuit=circuit, noise=spec)


def noisy_plan(plan: PreparationPlan, spec: NoiseSpec) -> PreparationPlan:
    if spec.epsilon == 0:
        return plan
    return replace(plan, transitions=tuple(apply_noise(tm, spec) for tm in plan.transitions),
                   rho_bath_init=_noisy_product(plan.rho_bath_init, spec), noise=spec)


def noisy_pauli(P: PauliString, spec: NoiseSpec) -> DenseOperator:
    """Õ = ⊗ σ̃ with ‖σ̃ − σ‖ ≤ ε and ‖σ̃‖ ≤ 1 per non-identity factor."""
    eps, fam = spec.epsilon, spec.meas_family
    mats = []
    for q, c in P.letters.items():
        sigma = PAULI_MATRICES[c]
        if eps == 0 or fam is None:
            mats.append(sigma)
        elif fam is MeasNoise.SHRINK:
            mats.append((1 - eps) * sigma)
        else:
            axis = np.zeros(3)
            axis["XYZ".index(c)] = 1.0
            rng = _rng(spec, 7919, list(Register).index(q.register), q.row, q.col)
            perp = rng.normal(size=3)
            perp -= perp.dot(axis) * axis
            perp /= np.linalg.norm(perp)
            theta = 2 * np.arcsin(eps / 2)  # |n - e| = 2 sin(θ/2) = ε
            n = np.cos(theta) * axis + np.sin(theta) * perp
            mats.append(sum(n[i] * PAULI_MATRICES[k] for i, k in enumerate("XYZ")))
    return DenseOperator(P.support, P.sign * kron_all(mats))


# --------------------------------------------------------------------------
# Text format

HEADER = "# hqs-circuit v1"


def _state_label(m: np.ndarray) -> str:
    for lab in "01+-":
        if np.allclose(m, projector(lab), atol=1e-12):
            return lab
    raise ValueError("only ideal |0>,|1>,|+>,|-> preparations can be exported")


def transition_to_text(tm: TransitionMap) -> str:
    if tm.noise is not None:
        raise ValueError("only ideal transition maps can be exported")
    lines = [f"transition {tm.row}",
             "bath " + " ".join(map(str, tm.bath)),
             "system " + " ".join(map(str, tm.system)),
             "sink " + " ".join(map(str, tm.sink))]
    for q in tm.system + tm.sink:
        lines.append(f"prep {q} {_state_label(tm.initial_factor(q))}")
    for i, layer in enumerate(tm.circuit.layers):
        for g in layer:
            if not g.is_clifford:
                raise ValueError(f"gate {g.name} has no text form")
            lines.append(f"{i} {g.name} " + " ".join(map(str, g.qubits)))
    lines.append("end")
    return "\n".join(lines)


def plan_to_text(plan: PreparationPlan) -> str:
    out = [HEADER, f"plan {plan.model} lx {plan.lx} ly {plan.ly}"]
    for q, m in plan.rho_bath_init.factors.items():
        out.append(f"init {q} {_state_label(m)}")
    out.extend(transition_to_text(tm) for tm in plan.transitions)
    return "\n".join(out) + "\n"


def _parse_qubits(tokens: Iterable[str]) -> tuple[QubitId, ...]:
    return tuple(QubitId.parse(tok) for tok in tokens)


def parse_circuit_text(text: str) -> PreparationPlan | list[TransitionMap]:
    """Inverse of :func:`plan_to_text` (also accepts bare transition blocks)."""
    lines = [ln.strip() for ln in text.splitlines()]
    if not lines or lines[0] != HEADER:
        raise ValueError("missing circuit header")
    tms: list[TransitionMap] = []
    init: dict[QubitId, str] = {}
    meta = {}
    cur = None
    for ln in lines[1:]:
        if not ln or ln.startswith("#"):
            continue
        tok = ln.split()
        if tok[0] == "plan":
            meta = {"model": tok[1], "lx": int(tok[3])}
        elif tok[0] == "init":
            init[QubitId.parse(tok[1])] = tok[2]
        elif tok[0] == "transition":
            cur = {"row": int(tok[1]), "prep": {}, "layers": []}
        elif tok[0] in ("bath", "system", "sink"):
            cur[tok[0]] = _parse_qubits(tok[1:])
        elif tok[0] == "prep":
            cur["prep"][QubitId.parse(tok[1])] = tok[2]
        elif tok[0] == "end":
            s, k = cur["system"], cur["sink"]
            layers = tuple(tuple(layer) for layer in cur["layers"])
            tms.append(TransitionMap(cur["row"], cur["bath"], s, k,
                                     ProductState({q: cur["prep"][q] for q in s}),
                                     ProductState({q: cur["prep"][q] for q in k}),
                                     LayeredCircuit(layers)))
            cur = None
        else:
            layer = int(tok[0])
            while len(cur["layers"]) <= layer:
                cur["layers"].append([])
            cur["layers"][layer].append(Gate(tok[1], _parse_qubits(tok[2:])))
    if not init:
        return tms
    return PreparationPlan(tuple(tms), ProductState(init), lx=meta.get("lx", 0), model=meta.get("model", "custom"))
