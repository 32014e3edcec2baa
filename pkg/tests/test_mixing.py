import itertools
import math

import numpy as np
import pytest

from hqs.circuits import surface_code_plan, trivial_plan
from hqs.core import DenseOperator, PauliString, bath, random_unitary
from hqs.mixing import (
    _strip_identity,
    bath_superoperator,
    eta,
    eta_series,
    fit_mixing,
    identity_superoperator,
    predicted_bound,
    segment,
)


@pytest.fixture(scope="module")
def code5():
    return surface_code_plan(3, 5)


def test_identity_window_interval():
    plan = surface_code_plan(3, 4)
    iv = eta(identity_superoperator(segment(plan, 0, 1)), restarts=4, iterations=50)
    assert iv.lower == pytest.approx(1.0, abs=1e-9)
    assert iv.upper == pytest.approx(math.sqrt(2), abs=1e-9)
    assert iv.witness in ("X", "Y", "Z")


def test_empty_window_is_identity(code5):
    sop = bath_superoperator(code5, 3, 2, segment(code5, 1, 1))
    assert np.allclose(sop.matrix, np.eye(4))


@pytest.mark.parametrize("ell", [1, 2])
@pytest.mark.parametrize("window", [(1, 1), (2, 2), (1, 3), (2, 3)])
def test_bulk_windows_mix_exactly(code5, ell, window):
    for start in range(3 - ell + 1):
        sop = bath_superoperator(code5, *window, segment(code5, start, ell), code5.bath)
        assert sop.is_unital()
        assert eta(sop, restarts=4, iterations=20).upper <= 1e-10


def test_full_row_keeps_the_logical_string(code5):
    sop = bath_superoperator(code5, 2, 2, code5.bath, code5.bath)
    assert eta(sop, restarts=2, iterations=20).lower >= 1 - 1e-9


def test_region_violation_raises(code5):
    with pytest.raises(ValueError):
        bath_superoperator(code5, 2, 2, segment(code5, 0, 2), segment(code5, 0, 1))
    zz = PauliString({bath(0): "Z", bath(1): "Z"}).to_operator()
    with pytest.raises(ValueError, match="leaves the region"):
        _strip_identity(zz, [bath(1)])
    z_only = DenseOperator((bath(0), bath(1)), np.kron(np.eye(2), np.diag([1, -1])))
    assert _strip_identity(z_only, [bath(1)]).support == (bath(0),)


def test_bad_window(code5):
    with pytest.raises(ValueError):
        bath_superoperator(code5, 3, 7, segment(code5, 0, 1))


def test_trivial_plan_mixes_in_one_step():
    plan = trivial_plan(3, 4, "+", "0")
    for w in [(1, 1), (2, 3), (1, 4)]:
        sop = bath_superoperator(plan, *w, plan.bath, plan.bath)
        assert eta(sop, restarts=2, iterations=10).upper <= 1e-12


def test_no_swap_control_does_not_mix():
    u = random_unitary(np.random.default_rng(7), 2)
    plan = trivial_plan(3, 3, "0", swap=False, bath_unitary=u)
    sop = bath_superoperator(plan, 1, 2, plan.bath, plan.bath)
    iv = eta(sop, restarts=8, iterations=50)
    assert iv.lower >= 0.5
    assert iv.lower_hermitian <= iv.upper and iv.lower_general <= iv.upper


def test_eta_series_keys(code5):
    s = eta_series(code5, [1], [(2, 2), (2, 3)], restarts=2, iterations=5)
    assert set(s) == {(1, 1), (1, 2)}


def test_fit_recovers_decay():
    series = {(1, t): 0.8 * math.exp(-0.5 * t) + 1e-4 for t in range(1, 16)}
    rep = fit_mixing(series)
    assert rep.gamma == pytest.approx(0.5, rel=0.05)
    assert rep.delta == pytest.approx(1e-4, rel=0.2)
    assert rep.classified


def test_fit_recovers_length_exponent():
    series = {(ell, t): 0.3 * ell ** 1.5 * math.exp(-0.7 * t) for ell in (1, 2, 3) for t in range(1, 8)}
    rep = fit_mixing(series)
    assert rep.alpha == pytest.approx(1.5, rel=0.02)
    assert rep.gamma == pytest.approx(0.7, rel=0.02)


def test_fit_exact_mixing_and_plateau():
    zero = fit_mixing({(1, t): 0.0 for t in range(1, 5)})
    assert zero.exact_mixing and zero.gamma == math.inf
    flat = fit_mixing({(1, t): 0.3 for t in range(1, 9)})
    assert flat.gamma_unconstrained and flat.delta == pytest.approx(0.3)


def test_fit_needs_three_times():
    with pytest.raises(ValueError):
        fit_mixing({(1, 1): 0.5, (1, 2): 0.2})


def test_report_text():
    rep = fit_mixing({(1, t): 0.0 for t in range(1, 4)})
    text = rep.to_text()
    assert "gamma = inf" in text and "ell,elapsed,lower,upper" in text


def test_predicted_bound():
    assert predicted_bound(0.0, 5, 0.0) == 0.0
    assert predicted_bound(0.0, 5, 0.01) == pytest.approx(0.05)
    eps = 1e-3
    assert predicted_bound(eps, 4, 0.0, C=2) == pytest.approx(2 * eps * math.log(1 / eps) ** 2)
    with pytest.raises(ValueError):
        predicted_bound(1.0, 1, 0.0)


_SIG = {"I": np.eye(2), "X": np.array([[0, 1], [1, 0]]), "Y": np.array([[0, -1j], [1j, 0]]), "Z": np.diag([1, -1])}


def test_trivial_window_kills_traceless_columns():
    plan = trivial_plan(3, 3, "0+1")
    sop = bath_superoperator(plan, 2, 2, plan.bath, plan.bath)
    # T*(P) = Tr[ρ_t P] I: every traceless image vanishes, only the identity row is populated
    assert np.abs(sop.matrix[1:, :]).max() <= 1e-12


def test_superoperator_matches_gram_oracle():
    u = random_unitary(np.random.default_rng(3), 2)
    plan = trivial_plan(2, 2, "0", swap=False, bath_unitary=u)
    sop = bath_superoperator(plan, 1, 1, plan.bath, plan.bath)
    labels = list(itertools.product("IXYZ", repeat=2))
    basis = [np.kron(_SIG[b], _SIG[a]) / 2 for a, b in labels]  # little-endian over (bath0, bath1)
    # M[i, j] = Tr[P_i T*(P_j)] = Tr[T(P_i) P_j] with T(X) = U X U†
    gram = np.array([[np.trace(u @ pi @ u.conj().T @ pj) for pj in basis] for pi in basis])
    assert np.abs(sop.matrix - gram).max() <= 1e-12


def test_eta_interval_is_ordered_and_bounded(code5):
    u = random_unitary(np.random.default_rng(11), 2)
    ctrl = trivial_plan(3, 3, "0", swap=False, bath_unitary=u)
    sops = [bath_superoperator(code5, 2, 3, segment(code5, 0, 2), code5.bath),
            bath_superoperator(code5, 2, 2, code5.bath, code5.bath),
            bath_superoperator(ctrl, 1, 2, segment(ctrl, 1, 1), ctrl.bath)]
    for sop in sops:
        iv = eta(sop, restarts=4, iterations=30)
        assert 0 <= iv.lower <= iv.upper <= 2


def test_empty_window_matches_identity_path(code5):
    ball = segment(code5, 1, 1)
    a = eta(bath_superoperator(code5, 3, 2, ball), restarts=4, iterations=30)
    b = eta(identity_superoperator(ball), restarts=4, iterations=30)
    assert (a.lower, a.upper) == pytest.approx((b.lower, b.upper), abs=1e-12)


def test_fit_pure_exponential_and_plateau():
    rep = fit_mixing({(1, t): 2 * math.exp(-0.5 * t) for t in range(1, 12)})
    assert rep.gamma == pytest.approx(0.5, rel=0.05) and rep.classified
    flat = fit_mixing({(1, t): 0.3 for t in range(1, 6)})
    assert flat.classified and flat.gamma_unconstrained


def test_predicted_bound_examples():
    e2 = math.exp(-2)
    assert predicted_bound(e2, 3, 0.0, C=1.5) == pytest.approx(1.5 * 4 * e2)
    assert predicted_bound(1e-300, 4, 0.02, C=2.0, op_norm=3.0) == pytest.approx(2.0 * 4 * 0.02 * 3.0, rel=1e-9)
    grid = np.linspace(1e-6, e2, 500)
    vals = [predicted_bound(float(e), 1, 0.0) for e in grid]
    assert np.all(np.diff(vals) > 0)
