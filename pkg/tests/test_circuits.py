import itertools

import numpy as np
import pytest

from hqs.circuits import (
    CircuitBuilder,
    Gate,
    GateNoise,
    LayeredCircuit,
    MeasNoise,
    NoiseSpec,
    ProductState,
    StateNoise,
    TransitionMap,
    _Ancillas,
    apply_noise,
    build_transition_map,
    logical_z,
    noisy_gate,
    noisy_pauli,
    noisy_plan,
    noisy_state,
    parse_circuit_text,
    plan_to_text,
    set_x_stabilizer,
    set_z_stabilizer,
    surface_code_generators,
    surface_code_plan,
    surface_code_transition,
    trivial_plan,
    trivial_state_transition,
)
from hqs.core import (
    PauliString,
    SupportError,
    append_state_channel,
    apply_channel,
    bath,
    operator_norm,
    partial_trace,
    projector,
    random_density,
    random_unitary,
    sink,
    system,
    trace_norm,
    unitary_channel,
)
from hqs.engine import run_forward, transition_superoperator
from hqs.live import LiveRegister
from hqs.stabilizer import (
    StabilizerTableau,
    pauli_expectation,
    simulate_plan,
    simulate_text,
)


def test_builder_layers_and_fence():
    a, b, c = bath(0), bath(1), bath(2)
    cb = CircuitBuilder()
    cb.add("CNOT", a, b)
    cb.add("H", c)  # independent: shares layer 0
    cb.add("CNOT", b, c)
    cb.fence()
    cb.add("H", a)
    circ = cb.build()
    assert [len(layer) for layer in circ.layers] == [2, 1, 1]
    assert circ.depth == 3


def test_layer_overlap_rejected():
    g = Gate("H", (bath(0),))
    with pytest.raises(ValueError):
        LayeredCircuit(((g, g),))


def test_gate_validation():
    with pytest.raises(SupportError):
        Gate("CNOT", (bath(0), bath(0)))
    with pytest.raises(ValueError):
        Gate("CNOT", (bath(0),))
    with pytest.raises(ValueError):
        Gate("T", (bath(0),))


def test_transition_partition_must_be_disjoint():
    B = (bath(0),)
    circ = LayeredCircuit(())
    with pytest.raises(SupportError):
        TransitionMap(1, B, B, (), ProductState({bath(0): "0"}), ProductState({}), circ)


# --------------------------------------------------------------------------
# generators


def _commute(p, q):
    n_anti = sum(1 for k, a in p.letters.items() if k in q.letters and q.letters[k] != a)
    return n_anti % 2 == 0


@pytest.mark.parametrize("lx,ly", [(3, 3), (3, 5), (5, 4), (7, 7)])
def test_generator_count_and_commutation(lx, ly):
    gens = [g.pauli() for g in surface_code_generators(lx, ly)]
    assert len(gens) == lx * ly - 1
    assert all(_commute(p, q) for p, q in itertools.combinations(gens, 2))
    for y in range(ly):
        assert all(_commute(logical_z(lx, y), p) for p in gens)


@pytest.mark.parametrize("lx,ly", [(3, 3), (5, 5)])
def test_generators_independent(lx, ly):
    gens = [g.pauli() for g in surface_code_generators(lx, ly)]
    sites = [system(y + 1, x) for y in range(ly) for x in range(lx)]
    rows = []
    for p in gens:
        rows.append([int(p.letters.get(q, "I") in "XY") for q in sites]
                    + [int(p.letters.get(q, "I") in "ZY") for q in sites])
    m = np.array(rows, dtype=np.uint8)
    rank = 0
    for col in range(m.shape[1]):
        piv = [r for r in range(rank, len(m)) if m[r, col]]
        if not piv:
            continue
        m[[rank, piv[0]]] = m[[piv[0], rank]]
        for r in range(len(m)):
            if r != rank and m[r, col]:
                m[r] ^= m[rank]
        rank += 1
    assert rank == lx * ly - 1


def test_rejects_even_width():
    with pytest.raises(ValueError):
        surface_code_transition(4, 1, 4)


@pytest.mark.parametrize("order", ["XZ", "ZX"])
@pytest.mark.parametrize("lx", [3, 5])
def test_both_orders_encode_the_code(order, lx):
    plan = surface_code_plan(lx, 5, order)
    sim = simulate_plan(plan, check=True)
    assert all(pauli_expectation(sim, g.pauli()) == 1 for g in surface_code_generators(lx, 5))
    assert all(pauli_expectation(sim, logical_z(lx, y)) == 1 for y in range(5))


def test_orders_produce_different_circuits():
    a = surface_code_transition(3, 2, 5, "XZ").circuit.gates()
    b = surface_code_transition(3, 2, 5, "ZX").circuit.gates()
    assert [g.name for g in a] != [g.name for g in b] or [g.qubits for g in a] != [g.qubits for g in b]


# --------------------------------------------------------------------------
# subroutines on dense states


def _run(cb, anc, state_qubits, rho):
    circ = cb.build()
    tm = TransitionMap(1, tuple(state_qubits), (), tuple(anc.states), ProductState({}),
                       ProductState(anc.states), circ)
    reg = LiveRegister.from_operator(rho)
    run_forward(reg, tm)
    return reg.to_operator(tuple(state_qubits))


def _expect(rho, pauli):
    return float(np.real(np.trace(rho.matrix @ pauli.to_operator(rho.support).matrix)))


@pytest.mark.parametrize("kind", ["X", "Z"])
def test_subroutine_sets_generator_from_any_input(rng, kind):
    qs = tuple(bath(i) for i in range(4))
    for _ in range(5):
        rho = random_density(rng, qs)
        cb, anc = CircuitBuilder(), _Ancillas(1)
        (set_x_stabilizer if kind == "X" else set_z_stabilizer)(cb, anc, list(qs), correct=qs[1])
        out = _run(cb, anc, qs, rho)
        assert _expect(out, PauliString({q: kind for q in qs})) == pytest.approx(1, abs=1e-12)


def test_x_subroutine_preserves_overlapping_z_pair(rng):
    qs = tuple(bath(i) for i in range(5))
    zz = PauliString({qs[0]: "Z", qs[2]: "Z"})  # overlaps the X plaquette on two sites
    for _ in range(5):
        rho = random_density(rng, qs)
        cb, anc = CircuitBuilder(), _Ancillas(1)
        set_x_stabilizer(cb, anc, list(qs[:4]), correct=qs[1])
        out = _run(cb, anc, qs, rho)
        assert _expect(out, zz) == pytest.approx(_expect(rho, zz), abs=1e-12)


def test_z_subroutine_preserves_overlapping_x_pair(rng):
    qs = tuple(bath(i) for i in range(5))
    xx = PauliString({qs[0]: "X", qs[2]: "X"})
    for _ in range(5):
        rho = random_density(rng, qs)
        cb, anc = CircuitBuilder(), _Ancillas(1)
        set_z_stabilizer(cb, anc, list(qs[:4]), correct=qs[3])
        out = _run(cb, anc, qs, rho)
        assert _expect(out, xx) == pytest.approx(_expect(rho, xx), abs=1e-12)


# --------------------------------------------------------------------------
# noise


@pytest.mark.parametrize("fam", list(GateNoise))
@pytest.mark.parametrize("eps", [1e-4, 1e-2, 0.3])
def test_gate_noise_certificate(rng, fam, eps):
    g = Gate("CNOT", (bath(0), bath(1)))
    ng = noisy_gate(g, NoiseSpec(eps, fam), (0,))
    assert ng.certificate <= eps * (1 + 1e-9)
    # the certificate upper-bounds the trace distance on entangled inputs too
    anc = (bath(2), bath(3))
    sup = g.qubits + anc
    for _ in range(3):
        rho = random_density(rng, sup)
        outs = []
        for kraus in (ng.channel_kraus(), g.channel_kraus()):
            k4 = [np.kron(np.eye(4), k) for k in kraus]
            outs.append(sum(k @ rho.matrix @ k.conj().T for k in k4))
        assert trace_norm(outs[0] - outs[1]) <= eps * (1 + 1e-9)


def test_zero_noise_is_identity():
    tm = surface_code_transition(3, 2, 4)
    assert apply_noise(tm, NoiseSpec(0.0)) is tm
    plan = surface_code_plan(3, 4)
    assert noisy_plan(plan, NoiseSpec(0.0)) is plan


def test_noise_families_can_be_switched_off():
    g = Gate("CNOT", (bath(0), bath(1)))
    assert noisy_gate(g, NoiseSpec(0.1, None), (0,)) is g
    w = projector("+")
    assert noisy_state(w, NoiseSpec(0.1, state_family=None)) is w
    p = PauliString({bath(0): "Z"})
    assert np.allclose(noisy_pauli(p, NoiseSpec(0.1, meas_family=None)).matrix, p.to_operator().matrix)


def test_seeded_noise_is_deterministic():
    g = Gate("SWAP", (bath(0), bath(1)))
    for fam in (GateNoise.MIX_WITH_FIXED_CHANNEL, GateNoise.COHERENT_OVERROTATION):
        a = noisy_gate(g, NoiseSpec(0.1, fam, seed=3), (2, 5)).channel_kraus()
        b = noisy_gate(g, NoiseSpec(0.1, fam, seed=3), (2, 5)).channel_kraus()
        c = noisy_gate(g, NoiseSpec(0.1, fam, seed=4), (2, 5)).channel_kraus()
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert not all(np.allclose(x, y) for x, y in zip(a, c))


@pytest.mark.parametrize("fam", list(StateNoise))
def test_state_noise_within_epsilon(fam):
    for lab in "01+-":
        w = projector(lab)
        for eps in (1e-3, 0.2, 1.0):
            assert trace_norm(noisy_state(w, NoiseSpec(eps, None, fam)) - w) <= eps + 1e-15


@pytest.mark.parametrize("fam", list(MeasNoise))
def test_measurement_noise(fam):
    p = PauliString({bath(0): "X", bath(2): "Y", bath(3): "Z"})
    for eps in (1e-3, 0.1):
        o = noisy_pauli(p, NoiseSpec(eps, None, None, fam, seed=9))
        assert operator_norm(o.matrix) <= 1 + 1e-12
        assert operator_norm(o.matrix - p.to_operator().matrix) <= 3 * eps + 1e-12


def test_noise_spec_accepts_names():
    s = NoiseSpec(0.1, "CoherentOverrotation", "MixWithOrthogonal", "RotateAxis")
    assert s.gate_family is GateNoise.COHERENT_OVERROTATION
    with pytest.raises(ValueError):
        NoiseSpec(1.5)


# --------------------------------------------------------------------------
# text format


@pytest.mark.parametrize("plan", [surface_code_plan(3, 4), surface_code_plan(5, 3, "ZX"),
                                  trivial_plan(3, 3, "+", "1")])
def test_text_round_trip(plan):
    text = plan_to_text(plan)
    back = parse_circuit_text(text)
    assert plan_to_text(back) == text
    assert back.lx == plan.lx and back.ly == plan.ly


def test_stabilizer_oracle_reads_the_same_text():
    text = plan_to_text(surface_code_plan(5, 4))
    sim = simulate_text(text)
    assert all(pauli_expectation(sim, g.pauli()) == 1 for g in surface_code_generators(5, 4))


def test_text_rejects_bad_header():
    with pytest.raises(ValueError):
        parse_circuit_text("transition 1\n")


def test_noisy_maps_cannot_be_exported():
    from hqs.circuits import transition_to_text

    with pytest.raises(ValueError):
        transition_to_text(apply_noise(surface_code_transition(3, 1, 4), NoiseSpec(0.1)))


# --------------------------------------------------------------------------
# transition channels


def test_trivial_transition_channel_swaps_rows(rng):
    tm = trivial_state_transition(2, 1, "+")
    ch = tm.as_channel()
    rho = random_density(rng, tm.bath)
    from hqs.core import apply_channel

    out = apply_channel(ch, rho)
    # the bath content is emitted as the system row and the bath is reset to |+>
    expected = np.kron(rho.matrix, np.kron(projector("+"), projector("+")))
    assert np.allclose(out.reorder(tm.bath + tm.system).matrix, expected)


def test_as_channel_size_guard():
    with pytest.raises(MemoryError):
        surface_code_transition(3, 2, 4).as_channel(max_qubits=4)


def test_surface_transition_structure():
    tm = surface_code_transition(3, 2, 5)
    assert set(tm.bath) == {bath(x) for x in range(3)}
    assert set(tm.system) == {system(2, x) for x in range(3)}
    assert tm.depth > 0


# --------------------------------------------------------------------------
# oracles for transition assembly and subroutines


def test_identity_circuit_appends_and_discards(rng):
    b, s, k = (bath(0),), (system(1, 0),), (sink(1, 0),)
    tm = build_transition_map(LayeredCircuit(()), ProductState.from_labels(s, "0"),
                              ProductState.from_labels(k, "1"), (b, s, k))
    rho = random_density(rng, b)
    out = apply_channel(tm.as_channel(), rho)
    assert np.allclose(out.reorder(b + s).matrix, np.kron(projector("0"), rho.matrix), atol=1e-12)


def test_swap_resets_bath_and_emits_input(rng):
    b, s = (bath(0),), (system(1, 0),)
    cb = CircuitBuilder()
    cb.add("SWAP", b[0], s[0])
    tm = build_transition_map(cb.build(), ProductState.from_labels(s, "0"), ProductState({}), (b, s, ()))
    rho = random_density(rng, b)
    out = apply_channel(tm.as_channel(), rho).reorder(b + s).matrix
    assert np.allclose(out, np.kron(rho.matrix, projector("0")), atol=1e-12)


@pytest.mark.parametrize("trial", range(4))
def test_random_circuit_matches_stepwise_composition(trial):
    rng = np.random.default_rng(50 + trial)
    b, s, k = (bath(0),), (system(1, 0),), (sink(1, 0),)
    u1, u2 = random_unitary(rng, 2), random_unitary(rng, 2)
    cb = CircuitBuilder()
    cb.add("U", b[0], s[0], unitary=u1)
    cb.add("U", s[0], k[0], unitary=u2)
    ws, wk = random_density(rng, s), random_density(rng, k)
    tm = build_transition_map(cb.build(), ProductState({s[0]: ws.matrix}), ProductState({k[0]: wk.matrix}),
                              (b, s, k))
    rho = random_density(rng, b)
    # Schrödinger picture, one step at a time
    step = apply_channel(append_state_channel(ws, b), rho)
    step = apply_channel(append_state_channel(wk, step.support), step)
    step = apply_channel(unitary_channel(u1, (b[0], s[0])), step)
    step = apply_channel(unitary_channel(u2, (s[0], k[0])), step)
    step = partial_trace(step, b + s)
    got = apply_channel(tm.as_channel(), rho)
    assert np.abs(got.reorder(b + s).matrix - step.reorder(b + s).matrix).max() <= 1e-12


def _tableau_run(cb, qs, anc, flips):
    """Run a subroutine on |flips> in stabilizer arithmetic; returns (tableau, index)."""
    index = {q: i for i, q in enumerate(list(qs) + list(anc.states))}
    tab = StabilizerTableau(len(index))
    for q, f in zip(qs, flips):
        if f:
            tab.pauli_x(index[q])
    for q, lab in anc.states.items():
        if lab == "+":
            tab.h(index[q])
    for g in cb.build().gates():
        tab.apply(g.name, [index[q] for q in g.qubits])
    return tab, index


def test_z_subroutine_on_all_basis_inputs():
    qs = tuple(bath(i) for i in range(4))
    zzzz = PauliString({q: "Z" for q in qs})
    for flips in itertools.product((0, 1), repeat=4):
        cb, anc = CircuitBuilder(), _Ancillas(1)
        set_z_stabilizer(cb, anc, list(qs), correct=qs[1])
        tab, index = _tableau_run(cb, qs, anc, flips)
        assert pauli_expectation((tab, index), zzzz) == 1


def test_x_subroutine_on_zero_state():
    qs = tuple(bath(i) for i in range(4))
    cb, anc = CircuitBuilder(), _Ancillas(1)
    set_x_stabilizer(cb, anc, list(qs), correct=qs[1])
    tab, index = _tableau_run(cb, qs, anc, (0, 0, 0, 0))
    assert pauli_expectation((tab, index), PauliString({q: "X" for q in qs})) == 1


def _subroutine_map(qs, steps):
    cb, anc = CircuitBuilder(), _Ancillas(1)
    for fn, sub, corr in steps:
        fn(cb, anc, list(sub), correct=corr)
    circ = cb.build()
    return build_transition_map(circ, ProductState({}), ProductState(anc.states), (qs, (), tuple(anc.states)))


def test_disjoint_subroutines_commute_as_channels():
    qs = tuple(bath(i) for i in range(4))
    a = (set_x_stabilizer, qs[:2], qs[0])
    b = (set_z_stabilizer, qs[2:], qs[3])
    ab = transition_superoperator(_subroutine_map(qs, [a, b]))
    ba = transition_superoperator(_subroutine_map(qs, [b, a]))
    assert np.abs(ab - ba).max() <= 1e-12


def test_disjoint_plaquettes_commute_on_random_states(rng):
    qs = tuple(bath(i) for i in range(8))
    a = (set_x_stabilizer, qs[:4], qs[1])
    b = (set_z_stabilizer, qs[4:], qs[5])
    for _ in range(2):
        rho = random_density(rng, qs)
        outs = []
        for steps in ([a, b], [b, a]):
            reg = LiveRegister.from_operator(rho)
            run_forward(reg, _subroutine_map(qs, steps))
            outs.append(reg.to_operator(qs).matrix)
        assert np.abs(outs[0] - outs[1]).max() <= 1e-12


def test_noisy_pauli_examples(rng):
    p = PauliString({bath(0): "X", bath(1): "Z"})
    assert np.array_equal(noisy_pauli(p, NoiseSpec(0.0, meas_family=MeasNoise.ROTATE_AXIS)).matrix,
                          p.to_operator().matrix)
    x = PauliString({bath(0): "X"})
    shrunk = noisy_pauli(x, NoiseSpec(0.1, None, None, MeasNoise.SHRINK))
    assert operator_norm(shrunk.matrix - x.to_operator().matrix) == pytest.approx(0.1)
    assert operator_norm(shrunk.matrix) == pytest.approx(0.9)
    for fam in MeasNoise:
        for _ in range(20):
            n = int(rng.integers(1, 5))
            eps = float(10 ** rng.uniform(-4, -0.5))
            P = PauliString({bath(i): "XYZ"[rng.integers(3)] for i in range(n)})
            o = noisy_pauli(P, NoiseSpec(eps, None, None, fam, seed=int(rng.integers(1000))))
            assert operator_norm(o.matrix - P.to_operator().matrix) <= n * eps + 1e-12


def test_noise_certificate_is_logged(caplog):
    with caplog.at_level("DEBUG", logger="hqs"):
        noisy_gate(Gate("CNOT", (bath(0), bath(1))), NoiseSpec(0.01), (0,))
    assert "certified diamond bound" in caplog.text
