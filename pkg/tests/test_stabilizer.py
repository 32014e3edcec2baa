import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hqs.circuits import (
    CircuitBuilder,
    GateNoise,
    MeasNoise,
    NoiseSpec,
    PreparationPlan,
    ProductState,
    Stabilizer,
    StateNoise,
    build_transition_map,
    logical_z,
    surface_code_generators,
    surface_code_plan,
    trivial_plan,
)
from hqs.core import PauliString, bath, system
from hqs.engine import expectation_local, noisy_expectation
from hqs.mixing import bath_superoperator
from hqs.stabilizer import (
    NonCliffordError,
    StabilizerTableau,
    check_row_annihilation,
    encoding_report,
    monte_carlo_pauli_noise,
    pauli_expectation,
    reduced_stabilizer_group,
    shots_csv,
    simulate_plan,
)

_I = np.eye(2)
_H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
_S = np.diag([1, 1j])
_PAULI = {"I": _I, "X": np.array([[0, 1], [1, 0]]), "Y": np.array([[0, -1j], [1j, 0]]), "Z": np.diag([1, -1])}


def _op(n, mats):
    """Little-endian embedding: mats maps qubit index -> 2x2 matrix."""
    out = np.eye(1)
    for q in reversed(range(n)):
        out = np.kron(out, mats.get(q, _I))
    return out


def _cnot(n, c, t):
    p0, p1 = np.diag([1, 0]), np.diag([0, 1])
    return _op(n, {c: p0}) + _op(n, {c: p1, t: _PAULI["X"]})


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 5))
def test_tableau_matches_statevector(seed, n):
    rng = np.random.default_rng(seed)
    tab = StabilizerTableau(n)
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = 1
    for _ in range(15):
        g = rng.choice(["H", "S", "CNOT"] if n > 1 else ["H", "S"])
        if g == "CNOT":
            c, t = (int(v) for v in rng.choice(n, 2, replace=False))
            tab.cnot(c, t)
            psi = _cnot(n, c, t) @ psi
        else:
            q = int(rng.integers(n))
            tab.apply(g, [q])
            psi = _op(n, {q: _H if g == "H" else _S}) @ psi
    tab.check_invariants()
    for _ in range(10):
        letters = rng.choice(list("IXYZ"), n)
        px = np.array([c in "XY" for c in letters], dtype=np.uint8)
        pz = np.array([c in "ZY" for c in letters], dtype=np.uint8)
        want = np.vdot(psi, _op(n, {i: _PAULI[c] for i, c in enumerate(letters)}) @ psi).real
        assert tab.expectation(px, pz) == pytest.approx(want, abs=1e-12)


def test_non_clifford_rejected():
    with pytest.raises(NonCliffordError):
        StabilizerTableau(2).apply("T", [0])


@pytest.mark.parametrize("lx", [3, 5, 7, 9])
def test_encoding_all_generators(lx):
    r = encoding_report(lx, lx)
    assert len(r["generators"]) == lx * lx - 1
    assert set(r["generators"]) == {1}
    assert set(r["logical_z"]) == {1}


def test_single_site_paulis_are_random():
    sim = simulate_plan(surface_code_plan(5, 4))
    for c in "XYZ":
        assert pauli_expectation(sim, PauliString({system(2, 2): c})) == 0


@pytest.mark.parametrize("lx", [3, 5, 7, 9])
def test_row_annihilation(lx):
    rep = check_row_annihilation(lx)
    assert rep.ok
    assert sorted(rep.survivors) == ["I" * lx, "Z" * lx]


def test_annihilation_rejects_even():
    with pytest.raises(ValueError):
        check_row_annihilation(4)


def test_reduced_group_contains_local_generators():
    sim = simulate_plan(surface_code_plan(3, 4))
    window = [system(2, 0), system(2, 1), system(3, 0), system(3, 1)]
    group = reduced_stabilizer_group(sim, window)
    assert ("ZZZZ", 1) in group


def test_mc_without_noise_is_exact():
    plan = surface_code_plan(3, 4)
    res = monte_carlo_pauli_noise(plan, 0.0, 1000, logical_z(3, 1), seed=0)
    assert res.mean == 1.0 and res.stderr == 0.0


def test_mc_is_seeded():
    plan = surface_code_plan(3, 4)
    P = surface_code_generators(3, 4)[0].pauli()
    a = monte_carlo_pauli_noise(plan, 0.01, 5000, P, seed=3)
    b = monte_carlo_pauli_noise(plan, 0.01, 5000, P, seed=3)
    assert a.mean == b.mean


def test_mc_agrees_with_dense_depolarizing():
    plan = surface_code_plan(3, 4)
    eps = 0.05
    P = logical_z(3, 1)
    dense = noisy_expectation(plan, P, NoiseSpec(eps, GateNoise.DEPOLARIZE_AFTER_GATE,
                                                 StateNoise.MIX_WITH_MAXIMALLY_MIXED, MeasNoise.SHRINK))
    mc = monte_carlo_pauli_noise(plan, 15 / 16 * eps / 2, 40000, P, seed=1, prep_flip=eps / 4,
                                 meas_scale=(1 - eps) ** P.weight)
    assert abs(mc.mean - dense) <= 4 * mc.stderr


def test_mc_trivial_prep_flips():
    plan = trivial_plan(3, 3, "0")
    P = PauliString({system(2, 1): "Z"})
    mc = monte_carlo_pauli_noise(plan, 0.0, 20000, P, seed=0, prep_flip=0.1)
    assert mc.mean == pytest.approx(0.8, abs=4 * mc.stderr)


def test_shots_csv_header():
    text = shots_csv([{"shots": 10, "mean": 0.5, "stderr": 0.1, "p": 0.01, "lx": 3, "ly": 4, "observable": "Z"}])
    assert text.splitlines()[0] == "shots,mean,stderr,p,lx,ly,observable"


def test_elementary_tableau_examples():
    tab = StabilizerTableau(1)
    z, x = (np.array([0], np.uint8), np.array([1], np.uint8)), (np.array([1], np.uint8), np.array([0], np.uint8))
    assert tab.expectation(*z) == 1 and tab.expectation(*x) == 0
    tab.h(0)
    assert tab.expectation(*x) == 1 and tab.expectation(*z) == 0
    bell = StabilizerTableau(2)
    bell.h(0)
    bell.cnot(0, 1)
    one = np.ones(2, np.uint8)
    zero = np.zeros(2, np.uint8)
    assert bell.expectation(one, zero) == 1  # XX
    assert bell.expectation(zero, one) == 1  # ZZ
    with pytest.raises(IndexError):
        bell.cnot(0, 2)


def test_annihilation_examples_lx3():
    rep = check_row_annihilation(3)
    assert rep.candidates == 4**3 - 2
    assert [s for s in rep.survivors if set(s) != {"I"}] == ["ZZZ"]
    for x in range(3):
        assert "".join("X" if i == x else "I" for i in range(3)) not in rep.survivors
    # survivors form a group: Zbar * Zbar = I
    assert {"III", "ZZZ"} == set(rep.survivors)


def test_annihilated_row_paulis_vanish_under_dense_bath_dual():
    plan = surface_code_plan(3, 5)
    sop = bath_superoperator(plan, 2, 2, plan.bath, plan.bath)
    survivors = set(check_row_annihilation(3).survivors)
    labels = ["".join(p) for p in itertools.product("IXYZ", repeat=3)]
    for j, lab in enumerate(labels):
        img = np.linalg.norm(sop.matrix[:, j])
        if lab in survivors:  # {III, ZZZ} reads the same in either qubit order
            assert img == pytest.approx(1, abs=1e-10)
        else:
            assert img <= 1e-10, lab


def test_tableau_agrees_with_dense_on_random_paulis(rng):
    plan = surface_code_plan(3, 3)
    sim = simulate_plan(plan)
    sites = [system(r, c) for r in (1, 2, 3) for c in range(3)]
    for _ in range(60):
        k = int(rng.integers(1, 5))
        chosen = rng.choice(len(sites), size=k, replace=False)
        P = PauliString({sites[i]: "XYZ"[rng.integers(3)] for i in chosen})
        assert expectation_local(plan, P) == pytest.approx(pauli_expectation(sim, P), abs=1e-10)


def _bell_plan():
    b = (bath(0), bath(1))
    cb = CircuitBuilder()
    cb.add("CNOT", *b)
    tm = build_transition_map(cb.build(), ProductState({}), ProductState({}), (b, (), ()))
    return PreparationPlan((tm,), ProductState.from_labels(b, "+0"))


def test_mc_single_cnot_against_fault_enumeration():
    p = 0.3
    zz = PauliString({bath(0): "Z", bath(1): "Z"})
    zz_m = np.kron(np.diag([1, -1]), np.diag([1, -1]))
    paulis = [np.kron(_PAULI[a], _PAULI[b]) for a in "IXYZ" for b in "IXYZ"][1:]
    # each of the 15 faults either commutes (outcome +1) or anticommutes (-1) with ZZ
    flips = sum(not np.allclose(P @ zz_m, zz_m @ P) for P in paulis)
    exact = 1 - 2 * p * flips / 15
    assert exact == pytest.approx(1 - 16 * p / 15)
    mc = monte_carlo_pauli_noise(_bell_plan(), p, 100000, zz, seed=4)
    assert abs(mc.mean - exact) <= 3 * mc.stderr


def test_mc_9x9_bulk_plaquette_matches_dense_3x3():
    p = 1e-3
    eps = p * 2 * 16 / 15  # depolarizing rate p = 15/16 * eps/2 in Pauli-fault form
    spec = NoiseSpec(eps, GateNoise.DEPOLARIZE_AFTER_GATE, StateNoise.MIX_WITH_MAXIMALLY_MIXED, MeasNoise.SHRINK)
    small = Stabilizer("Z", ((0, 1), (1, 1), (0, 2), (1, 2))).pauli()
    dense = 1 - noisy_expectation(surface_code_plan(3, 4), small, spec)
    big = Stabilizer("Z", ((4, 3), (5, 3), (4, 4), (5, 4))).pauli()
    mc = monte_carlo_pauli_noise(surface_code_plan(9, 9), p, 100000, big, seed=2, prep_flip=eps / 4,
                                 meas_scale=(1 - eps) ** 4)
    assert abs((mc.ideal - mc.mean) - dense) <= 3 * mc.stderr
