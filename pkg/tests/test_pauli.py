import numpy as np
import pytest

from spinmap.pauli import (
    PauliOperator,
    Region,
    bits_commutator,
    bits_multiply,
    enumerate_group,
    multiply,
    pauli_from_index,
    pauli_index,
    scalar_commutator_exponent,
)


def test_string_round_trip_qubits():
    p = PauliOperator.from_string("XIZZY", 2)
    assert p.n == 5
    assert p.to_string() == "XIZZY"
    assert np.array_equal(p.x, [1, 0, 0, 0, 1])
    assert np.array_equal(p.z, [0, 0, 1, 1, 1])
    assert PauliOperator.from_string("IIIII", 2).is_identity()


def test_string_round_trip_qutrits():
    p = PauliOperator.from_string("x1z2 x0z0 x2z1", 3)
    assert p.n == 3 and p.d == 3
    assert np.array_equal(p.x, [1, 0, 2])
    assert np.array_equal(p.z, [2, 0, 1])
    assert PauliOperator.from_string(p.to_string(), 3) == p


def test_string_rejects_bad_input():
    with pytest.raises(ValueError):
        PauliOperator.from_string("XQ", 2)
    with pytest.raises(ValueError):
        PauliOperator.from_string("x3z0", 3)  # exponent out of range
    with pytest.raises(ValueError):
        PauliOperator(np.zeros(2), np.zeros(2), 4)  # composite d


def test_multiplication_adds_exponents():
    x = PauliOperator.from_string("XI", 2)
    z = PauliOperator.from_string("ZI", 2)
    assert multiply(x, z).to_string() == "YI"
    assert multiply(x, x).is_identity()
    a = PauliOperator.from_string("x1z0", 3)
    b = PauliOperator.from_string("x2z0", 3)
    assert multiply(a, b).is_identity()
    assert (a ** 3).is_identity()
    assert multiply(a, a.inverse()).is_identity()


def test_commutator_exponent_qubits():
    x = PauliOperator.from_string("X", 2)
    z = PauliOperator.from_string("Z", 2)
    y = PauliOperator.from_string("Y", 2)
    assert scalar_commutator_exponent(x, z) == 1
    assert scalar_commutator_exponent(z, x) == 1
    assert scalar_commutator_exponent(x, y) == 1
    assert scalar_commutator_exponent(x, x) == 0
    # XX commutes with ZZ even though each site anticommutes
    xx = PauliOperator.from_string("XX", 2)
    zz = PauliOperator.from_string("ZZ", 2)
    assert scalar_commutator_exponent(xx, zz) == 0


def test_commutator_exponent_qutrits():
    a = PauliOperator.from_string("x1z0", 3)
    b = PauliOperator.from_string("x0z1", 3)
    assert scalar_commutator_exponent(a, b) == 1
    assert scalar_commutator_exponent(b, a) == 2  # -1 mod 3
    c = PauliOperator.from_string("x2z0", 3)
    assert scalar_commutator_exponent(c, b) == 2


def test_weight_counts_non_identity_sites():
    assert PauliOperator.from_string("XIZZY", 2).weight == 4
    assert PauliOperator.identity(7, 3).weight == 0


def test_pauli_index_ordering():
    # first region site is the most significant digit; per-site code is
    # x*d + z, so for qubits the single-site order is I, Z, X, Y
    labels = ["II", "IZ", "IX", "IY", "ZI", "ZZ", "ZX", "ZY"]
    for want, s in enumerate(labels):
        p = PauliOperator.from_string(s, 2)
        assert pauli_index(p) == want
    for idx in range(16):
        p = pauli_from_index(idx, 2, 2)
        assert pauli_index(p) == idx
    for idx in range(81):
        p = pauli_from_index(idx, 2, 3)
        assert pauli_index(p) == idx


def test_enumerate_group():
    ops = enumerate_group(Region((0, 2)), 2)
    assert len(ops) == 16
    assert ops[0].is_identity()
    # list position matches the canonical index
    assert [pauli_index(op) for op in ops] == list(range(16))
    ops3 = enumerate_group(Region((1,)), 3)
    assert len(ops3) == 9
    with pytest.raises(ValueError):
        enumerate_group(Region(tuple(range(9))), 2)  # 4^9 over the cap


def test_restrict_embed_round_trip():
    p = PauliOperator.from_string("XIZZY", 2)
    r = Region((0, 2, 4))
    q = p.restrict(r)
    assert q.to_string() == "XZY"
    back = q.embed(5, r)
    assert back.to_string() == "XIZIY"


def test_packed_bits_match_object_arithmetic():
    rng = np.random.default_rng(11)
    for _ in range(50):
        a = PauliOperator(rng.integers(0, 2, 9), rng.integers(0, 2, 9), 2)
        b = PauliOperator(rng.integers(0, 2, 9), rng.integers(0, 2, 9), 2)
        xa, za = a.to_bits()
        xb, zb = b.to_bits()
        assert bits_commutator(xa, za, xb, zb) == scalar_commutator_exponent(a, b)
        xc, zc = bits_multiply(xa, za, xb, zb)
        assert PauliOperator.from_bits(xc, zc, 9) == multiply(a, b)


def test_hash_and_equality():
    a = PauliOperator.from_string("XZ", 2)
    b = PauliOperator.from_string("XZ", 2)
    assert a == b and hash(a) == hash(b)
    assert a != PauliOperator.from_string("ZX", 2)
    assert len({a, b}) == 1


def test_region_validation():
    with pytest.raises(ValueError):
        Region((0, 0))
    with pytest.raises(ValueError):
        Region((-1,))
    with pytest.raises(ValueError):
        Region((0, 5)).validate_for(3)
