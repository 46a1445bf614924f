import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holodfs.operators import (
    HilbertSpace,
    QOperator,
    StateVector,
    annihilation,
    basis_ket,
    commutator,
    creation,
    embed,
    excitation_number,
    hermitian_eigendecomposition,
    identity,
    transmon_lowering,
    transmon_sigma_z,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


def cavity(n_max):
    return HilbertSpace.build(("c", "cavity", n_max + 1))


def s1(levels=2, n_max=1):
    return HilbertSpace.build(("q1", "transmon", levels), ("q2", "transmon", levels), ("c", "cavity", n_max + 1))


def test_space_dimension_and_labels():
    sp = s1(2, 2)
    assert sp.dim == 12
    assert sp.subsystem_dim("c") == 3
    with pytest.raises(ValueError):
        HilbertSpace((2, 2), ("q", "q"))
    with pytest.raises(KeyError):
        sp.index("c2")


def test_annihilation_two_level():
    a = annihilation(cavity(1), "c")
    np.testing.assert_array_equal(a.matrix, [[0, 1], [0, 0]])


def test_annihilation_fock_lowering():
    sp = cavity(2)
    a = annihilation(sp, "c")
    out = a @ basis_ket(sp, (2,))
    np.testing.assert_allclose(out, [0, np.sqrt(2), 0], atol=1e-15)
    np.testing.assert_allclose(a @ basis_ket(sp, (0,)), 0)


def test_annihilation_embedded_with_identity():
    sp = HilbertSpace.build(("q", "transmon", 2), ("c", "cavity", 2))
    a = annihilation(sp, "c")
    np.testing.assert_array_equal(a.matrix, np.kron(np.eye(2), [[0, 1], [0, 0]]))


def test_annihilation_errors():
    sp = HilbertSpace.build(("q", "transmon", 2), ("c", "cavity", 1))
    with pytest.raises(KeyError):
        annihilation(sp, "c9")
    with pytest.raises(ValueError):
        annihilation(sp, "c")
    with pytest.raises(ValueError):
        annihilation(sp, "q")


def test_transmon_lowering_levels():
    sp2 = HilbertSpace.build(("q", "transmon", 2))
    np.testing.assert_array_equal(transmon_lowering(sp2, "q", 1).matrix, [[0, 1], [0, 0]])
    sp3 = HilbertSpace.build(("q", "transmon", 3))
    m = transmon_lowering(sp3, "q", 2).matrix
    expect = np.zeros((3, 3))
    expect[1, 2] = 1
    np.testing.assert_array_equal(m, expect)
    with pytest.raises(ValueError):
        transmon_lowering(sp2, "q", 2)


def test_sigma_z_on_three_levels_is_zero_on_leakage_level():
    sp3 = HilbertSpace.build(("q", "transmon", 3))
    np.testing.assert_array_equal(np.diag(transmon_sigma_z(sp3, "q").matrix), [1, -1, 0])


def test_embed_ordering_first_label_slowest():
    sp = HilbertSpace.build(("q1", "transmon", 2), ("q2", "transmon", 2))
    np.testing.assert_array_equal(np.diag(embed(sp, "q1", SZ).matrix), [1, 1, -1, -1])
    np.testing.assert_array_equal(np.diag(embed(sp, "q2", SZ).matrix), [1, -1, 1, -1])


def test_embed_identity_and_mismatch():
    sp = s1()
    np.testing.assert_array_equal(embed(sp, "q2", np.eye(2)).matrix, np.eye(sp.dim))
    with pytest.raises(ValueError):
        embed(sp, "q1", np.eye(3))


def test_basis_ket_dfs_states():
    sp = s1()
    k0 = basis_ket(sp, (1, 0, 0))
    assert np.argmax(np.abs(k0.amplitudes)) == 1 * 4 + 0 * 2 + 0
    kE = basis_ket(sp, (0, 0, 1))
    assert kE.amplitudes[1] == 1
    with pytest.raises(ValueError):
        basis_ket(sp, (0, 0, 2))


def test_state_vector_normalisation_enforced():
    sp = cavity(1)
    with pytest.raises(ValueError):
        StateVector(sp, [1.0, 1.0])
    StateVector(sp, [1.0, 1e-11])


def test_commutator_basics():
    sp = HilbertSpace.build(("q", "transmon", 2))
    z = QOperator(sp, SZ)
    assert np.all(commutator(z, z).matrix == 0)
    cav = cavity(2)
    adag = creation(cav, "c")
    np.testing.assert_allclose(adag @ basis_ket(cav, (0,)), [0, 1, 0])


def test_truncated_canonical_commutator():
    # [a, a^dag] = 1 except in the top Fock level where it is -n_max
    for n_max in (1, 2, 4):
        sp = cavity(n_max)
        a = annihilation(sp, "c")
        c = commutator(a, a.dag()).matrix
        expect = np.eye(n_max + 1)
        expect[n_max, n_max] = -n_max
        np.testing.assert_allclose(c, expect, atol=1e-12)
    c = commutator(annihilation(cavity(2), "c"), creation(cavity(2), "c")).matrix
    np.testing.assert_allclose(c, np.diag([1, 1, -2]), atol=1e-12)


def test_space_mismatch_rejected():
    a1 = annihilation(cavity(1), "c")
    a2 = annihilation(cavity(2), "c")
    with pytest.raises(ValueError):
        a1 @ a2
    with pytest.raises(ValueError):
        a1 + a2


def test_eigendecomposition_examples(rng):
    sp = HilbertSpace.build(("q", "transmon", 2))
    ev, _ = hermitian_eigendecomposition(QOperator(sp, np.diag([2.0, 1.0])))
    np.testing.assert_allclose(ev, [1, 2])
    ev, _ = hermitian_eigendecomposition(QOperator(sp, SX))
    np.testing.assert_allclose(ev, [-1, 1])
    sp5 = HilbertSpace((5,), ("c",))
    X = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    M = X + X.conj().T
    ev, V = hermitian_eigendecomposition(QOperator(sp5, M))
    assert np.all(np.diff(ev) >= 0)
    assert np.max(np.abs(M - V @ np.diag(ev) @ V.conj().T)) <= 1e-9 * 5
    with pytest.raises(ValueError):
        hermitian_eigendecomposition(QOperator(sp5, X))


# -- properties ----------------------------------------------------------------

levels = st.sampled_from([2, 3])
nmax = st.integers(1, 3)


@given(levels, nmax)
def test_qubit_lowering_nilpotent(d, n):
    sp = s1(d, n)
    for q in ("q1", "q2"):
        L = transmon_lowering(sp, q, 1)
        if d == 2:
            assert np.all((L @ L).matrix == 0)
        M = L.dag().dag()
        assert np.array_equal(M.matrix, L.matrix)


@given(st.integers(0, 2**32 - 1))
def test_embed_homomorphism_and_commutation(seed):
    r = np.random.default_rng(seed)
    sp = s1(3, 2)
    A = r.normal(size=(3, 3)) + 1j * r.normal(size=(3, 3))
    B = r.normal(size=(3, 3)) + 1j * r.normal(size=(3, 3))
    C = r.normal(size=(3, 3)) + 1j * r.normal(size=(3, 3))
    lhs = embed(sp, "q1", A) @ embed(sp, "q1", B)
    np.testing.assert_allclose(lhs.matrix, embed(sp, "q1", A @ B).matrix, atol=1e-12)
    x, y = embed(sp, "q1", A), embed(sp, "c", C)
    np.testing.assert_allclose(commutator(x, y).matrix, 0, atol=1e-12)


@given(levels, nmax)
def test_basis_kets_orthonormal(d, n):
    sp = s1(d, n)
    occ = sp.occupations()
    K = np.array([basis_ket(sp, o).amplitudes for o in occ])
    np.testing.assert_allclose(K.conj() @ K.T, np.eye(sp.dim), atol=1e-12)


def test_excitation_number_counts_levels():
    sp = s1(3, 2)
    N = np.real(np.diag(excitation_number(sp).matrix))
    assert N[sp.flat_index((2, 1, 2))] == 5
    assert np.array_equal(identity(sp).matrix, np.eye(sp.dim))
