import numpy as np
import pytest

from invphase import linalg
from invphase.errors import (
    DimensionMismatch,
    NonHermitianInput,
)
from invphase.linalg import OperatorMatrix, comm_norm, eigh, expm_igen


def taylor_expm(a, s, terms=60):
    """Independent oracle: exp(-1j*s*a) by plain Taylor series."""
    a = np.asarray(a, dtype=complex)
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ ((-1j * s) * a) / k
        out = out + term
    return out


class TestOperatorMatrix:
    def test_identity_flags(self):
        m = OperatorMatrix(np.eye(3), flags=("hermitian", "unitary", "diagonal"))
        assert m.dim == 3
        assert m.flags == frozenset({"hermitian", "unitary", "diagonal"})

    def test_diag_hermitian(self):
        m = OperatorMatrix(np.diag([2.0, -1.0]), flags=("hermitian", "diagonal"))
        assert np.array_equal(m.array, np.diag([2.0, -1.0]))

    def test_hermitian_flag_rejected(self):
        a = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(NonHermitianInput):
            OperatorMatrix(a, flags=("hermitian",))

    def test_hermitian_tolerance_scales_with_magnitude(self):
        # defect 1e-13 relative to max|A| = 1e3 passes; absolute 1e-10 would not
        a = np.array([[1e3, 1.0 + 1e-10j], [1.0, -1e3]])
        m = OperatorMatrix(a, flags=("hermitian",))
        assert "hermitian" in m.flags

    def test_unitary_flag_rejected(self):
        with pytest.raises(ValueError):
            OperatorMatrix(2.0 * np.eye(2), flags=("unitary",))

    def test_diagonal_flag_exact(self):
        a = np.eye(2)
        a[0, 1] = 1e-300
        with pytest.raises(ValueError):
            OperatorMatrix(a, flags=("diagonal",))

    def test_unknown_flag(self):
        with pytest.raises(ValueError):
            OperatorMatrix(np.eye(2), flags=("positive",))

    def test_non_square_rejected(self):
        with pytest.raises(DimensionMismatch):
            OperatorMatrix(np.zeros((2, 3)))

    def test_immutability(self):
        m = OperatorMatrix(np.eye(2))
        with pytest.raises((ValueError, RuntimeError)):
            m.array[0, 0] = 5.0

    def test_arithmetic_flag_propagation(self):
        a = OperatorMatrix(np.diag([1.0, 2.0]), flags=("hermitian", "diagonal"))
        b = OperatorMatrix(np.diag([3.0, 4.0]), flags=("hermitian", "diagonal"))
        s = a + b
        assert "hermitian" in s.flags and "diagonal" in s.flags
        p = a @ b
        assert "diagonal" in p.flags
        n = a * 2.0
        assert "hermitian" in n.flags
        c = a * 1j  # complex scalar breaks hermiticity
        assert "hermitian" not in c.flags

    def test_dagger(self):
        arr = np.array([[1.0, 2.0 + 1j], [0.0, 3.0]])
        m = OperatorMatrix(arr)
        assert np.array_equal(m.dagger().array, arr.conj().T)

    def test_dimension_mismatch_add(self):
        a = OperatorMatrix(np.eye(2))
        b = OperatorMatrix(np.eye(3))
        with pytest.raises(DimensionMismatch):
            a + b


class TestEigh:
    def test_pauli_x_convention(self):
        # Pauli X: eigenvalues (-1, 1),
        # eigenvectors (1,-1)/sqrt(2) then (1,1)/sqrt(2)
        w, v = eigh(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(w, [-1.0, 1.0], atol=1e-14)
        s = 1 / np.sqrt(2)
        assert np.allclose(v[:, 0], [s, -s], atol=1e-14)
        assert np.allclose(v[:, 1], [s, s], atol=1e-14)

    def test_ascending_order(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
        a = a + a.conj().T
        w, v = eigh(a)
        assert np.all(np.diff(w) >= 0)
        assert np.allclose(a @ v, v * w, atol=1e-12)

    def test_non_hermitian_rejected(self):
        with pytest.raises(NonHermitianInput):
            eigh(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_determinism_bitwise(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(30, 30)) + 1j * rng.normal(size=(30, 30))
        a = a + a.conj().T
        w1, v1 = eigh(a)
        w2, v2 = eigh(a.copy())
        assert np.array_equal(w1, w2)
        assert np.array_equal(v1, v2)

    def test_degenerate_cluster_canonical(self):
        # identity block: canonical basis must be the standard basis itself
        w, v = eigh(np.eye(4))
        assert np.allclose(v, np.eye(4), atol=1e-12)

    def test_degenerate_cluster_rotation_independent(self):
        # two degenerate subspaces; result must not depend on which unitary
        # mixes them before the solve (up to the eigenspaces themselves)
        rng = np.random.default_rng(3)
        d = np.diag([1.0, 1.0, 2.0, 2.0])
        # conjugate by a random unitary that preserves the eigenspaces
        q1, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        q = np.block([[q1, np.zeros((2, 2))], [np.zeros((2, 2)), np.eye(2)]])
        a = q @ d @ q.conj().T
        w1, v1 = eigh(d)
        w2, v2 = eigh(a)
        assert np.allclose(w1, w2, atol=1e-12)
        # same eigenvalue-1 subspace, canonically fixed basis -> same vectors
        assert np.allclose(v1[:, :2], v2[:, :2], atol=1e-9)

    def test_phase_convention_real_positive(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
        a = a + a.conj().T
        _, v = eigh(a)
        for j in range(12):
            i = int(np.argmax(np.abs(v[:, j])))
            piv = v[i, j]
            assert abs(piv.imag) < 1e-13
            assert piv.real > 0

    def test_random_hermitian_properties(self):
        rng = np.random.default_rng(123)
        for dim in (2, 5, 17, 64, 200):
            a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            a = (a + a.conj().T) / 2
            w, v = eigh(a)
            assert np.all(np.diff(w) >= 0)
            assert np.allclose(v.conj().T @ v, np.eye(dim), atol=1e-11)
            assert np.linalg.norm(a @ v - v * w) < 1e-10 * max(
                1.0, np.linalg.norm(a))


class TestExpm:
    def test_pauli_x_half_pi(self):
        # Pauli X rotation: exp(-1j * (pi/2) * X) = -1j * X
        x = np.array([[0.0, 1.0], [1.0, 0.0]])
        u = expm_igen(x, np.pi / 2)
        assert np.allclose(u, -1j * x, atol=1e-14)
        assert np.allclose(u, taylor_expm(x, np.pi / 2), atol=1e-13)

    def test_diagonal_fast_path(self):
        d = np.diag([1.0, -2.0, 0.5])
        u = expm_igen(d, 0.7)
        assert np.allclose(u, np.diag(np.exp(-1j * 0.7 * np.diag(d))),
                           atol=1e-15)

    def test_unitarity_machine_precision(self):
        rng = np.random.default_rng(42)
        for dim in (3, 20, 120):
            a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            a = (a + a.conj().T) / 2
            u = expm_igen(a, 0.31)
            assert np.linalg.norm(u.conj().T @ u - np.eye(dim)) < 1e-12 * dim

    def test_matches_taylor_oracle(self):
        rng = np.random.default_rng(8)
        a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        a = (a + a.conj().T) / 2
        for s in (0.0, 0.1, -1.3):
            assert np.allclose(expm_igen(a, s), taylor_expm(a, s), atol=1e-12)

    def test_group_property(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(8, 8))
        a = (a + a.T) / 2
        u1 = expm_igen(a, 0.4)
        u2 = expm_igen(a, 0.6)
        u3 = expm_igen(a, 1.0)
        assert np.allclose(u1 @ u2, u3, atol=1e-13)

    def test_operatormatrix_input(self):
        m = OperatorMatrix(np.diag([1.0, 2.0]), flags=("hermitian",))
        u = expm_igen(m, 1.0)
        assert np.allclose(u, np.diag(np.exp(-1j * np.array([1.0, 2.0]))))


class TestCommNorm:
    def test_commuting(self):
        assert comm_norm(np.diag([1.0, 2.0]), np.diag([3.0, 4.0])) == 0.0

    def test_pauli(self):
        # [X, Y] = 2i Z -> Frobenius norm = 2*sqrt(2)
        x = np.array([[0.0, 1.0], [1.0, 0.0]])
        y = np.array([[0.0, -1j], [1j, 0.0]])
        assert np.isclose(comm_norm(x, y), 2 * np.sqrt(2), atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            comm_norm(np.eye(2), np.eye(3))


class TestHelpers:
    def test_polar_unitary(self):
        rng = np.random.default_rng(2)
        a = np.linalg.qr(rng.normal(size=(5, 5))
                         + 1j * rng.normal(size=(5, 5)))[0]
        noisy = a + 1e-8 * rng.normal(size=(5, 5))
        u = linalg.polar_unitary(noisy)
        assert np.linalg.norm(u.conj().T @ u - np.eye(5)) < 1e-14 * 5
        assert np.linalg.norm(u - a) < 1e-6

    def test_hermitize(self):
        a = np.array([[1.0, 2.0], [0.0, 3.0]])
        h = linalg.hermitize(a)
        assert np.array_equal(h, h.conj().T)

    def test_frob(self):
        assert np.isclose(linalg.frob(np.eye(3)), np.sqrt(3))
