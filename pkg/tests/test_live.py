import numpy as np
import pytest

from hqs.circuits import CNOT, H
from hqs.core import (
    DenseOperator,
    bath,
    embed,
    random_density,
    random_operator,
    random_unitary,
)
from hqs.live import CeilingError, LiveRegister, dense_ceiling


def test_add_remove_round_trip(rng):
    rho = random_density(rng, (bath(0), bath(1)))
    reg = LiveRegister.from_operator(rho)
    omega = random_density(rng, (bath(2),)).matrix
    reg.add(bath(2), omega)
    reg.remove(bath(2))
    assert np.allclose(reg.to_operator(rho.support).matrix, rho.matrix)


def test_to_operator_order(rng):
    sup = (bath(0), bath(1), bath(2))
    op = random_operator(rng, sup)
    reg = LiveRegister.from_operator(op)
    assert np.allclose(reg.to_operator(sup).matrix, op.matrix)
    other = (bath(2), bath(0), bath(1))
    assert np.allclose(reg.to_operator(other).matrix, op.reorder(other).matrix)


@pytest.mark.parametrize("heisenberg", [False, True])
def test_conjugate_matches_dense(rng, heisenberg):
    sup = (bath(0), bath(1), bath(2))
    op = random_operator(rng, sup)
    u = random_unitary(rng, 2)
    reg = LiveRegister.from_operator(op)
    reg.conjugate(u, (bath(2), bath(0)), heisenberg=heisenberg)
    uf = embed(DenseOperator((bath(2), bath(0)), u), sup).matrix
    ref = uf.conj().T @ op.matrix @ uf if heisenberg else uf @ op.matrix @ uf.conj().T
    assert np.allclose(reg.to_operator(sup).matrix, ref)


def test_superop_equals_conjugation(rng):
    sup = (bath(0), bath(1))
    op = random_operator(rng, sup)
    a, b = LiveRegister.from_operator(op), LiveRegister.from_operator(op)
    a.conjugate(CNOT, sup)
    b.apply_superop(np.kron(CNOT.conj(), CNOT), sup)
    assert np.allclose(a.matrix(), b.matrix())


def test_remove_with_factor_contracts(rng):
    sup = (bath(0), bath(1))
    op = random_operator(rng, sup)
    w = random_density(rng, (bath(1),)).matrix
    reg = LiveRegister.from_operator(op)
    reg.remove(bath(1), w)
    # reshaped axes are (row b1, row b0, col b1, col b0)
    ref = np.einsum("iajb,ji->ab", op.matrix.reshape(2, 2, 2, 2), w)
    assert np.allclose(reg.matrix(), ref)


def test_ceiling(monkeypatch):
    monkeypatch.setenv("HQS_DENSE_QUBIT_CEILING", "2")
    assert dense_ceiling() == 2
    reg = LiveRegister()
    reg.add(bath(0), np.eye(2) / 2)
    reg.add(bath(1), np.eye(2) / 2)
    with pytest.raises(CeilingError):
        reg.add(bath(2), H @ H.conj().T / 2)
    assert reg.peak == 2
