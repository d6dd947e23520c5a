import numpy as np
import pytest

from invphase.errors import (
    ComputeError,
    DegeneracyCrossing,
    DimensionMismatch,
    GridTooCoarse,
    OverlapTooSmall,
    SymmetryViolation,
)
from invphase.invariant import (
    InvariantFrame,
    InvariantPath,
    build_geq,
    eigenframe,
    gauge_transform,
    hstar,
    lvn_residual,
    symmetry_check,
    transport,
)
from invphase.linalg import comm_norm, expm_igen, frob
from invphase.propagator import HamiltonianSchedule, UnitaryPath, evolve


def random_hermitian(dim, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (a + a.conj().T) / 2


def integer_spectrum_hermitian(dim, seed):
    """Hermitian with spectrum 0..dim-1 so exp(-2 pi i K) = identity."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, _ = np.linalg.qr(a)
    return q @ np.diag(np.arange(dim, dtype=float)) @ q.conj().T


def cranked_setup(dim=6, steps=512, seed=0):
    """Cranked system with exactly periodic invariant (period 2 pi)."""
    k = integer_spectrum_hermitian(dim, seed)
    i0 = np.diag(np.linspace(0.5, 3.0, dim))  # distinct spectrum
    h0 = i0 + k

    def ham(t):
        u = expm_igen(k, t)
        return u @ h0 @ u.conj().T

    period = 2 * np.pi
    sched = HamiltonianSchedule.from_callable(ham, dim, period=period)
    path = evolve(sched, period, steps=steps, tol=1e-10)
    return k, i0, sched, path, period


class TestTransport:
    def test_identity_path_constant(self):
        grid = np.linspace(0, 1, 5)
        eye = np.stack([np.eye(3, dtype=complex)] * 5)
        path = UnitaryPath(grid, eye)
        i0 = np.diag([1.0, 2.0, 3.0])
        inv = transport(path, i0)
        assert inv.source == "transported"
        for s in inv.samples:
            assert np.allclose(s, i0, atol=1e-15)

    def test_cranked_matches_analytic(self):
        k, i0, _, path, _ = cranked_setup()
        inv = transport(path, i0)
        for idx in (57, 253, 490):
            t = inv.grid[idx]
            u = expm_igen(k, t)
            analytic = u @ i0 @ u.conj().T
            assert frob(inv.samples[idx] - analytic) < 1e-8

    def test_dimension_mismatch(self):
        grid = np.linspace(0, 1, 3)
        path = UnitaryPath(grid, np.stack([np.eye(2, dtype=complex)] * 3))
        with pytest.raises(DimensionMismatch):
            transport(path, np.eye(3))

    def test_spectrum_drift_rejected(self):
        grid = np.linspace(0, 1, 3)
        samples = np.stack([np.diag([1.0, 2.0]), np.diag([1.0, 2.0]),
                            np.diag([1.0, 2.5])]).astype(complex)
        with pytest.raises(ComputeError):
            InvariantPath(grid, samples)


class TestLvnResidual:
    def test_constant_commuting(self):
        grid = np.linspace(0, 1, 9)
        i0 = np.diag([1.0, 2.0])
        inv = InvariantPath(grid, np.stack([i0.astype(complex)] * 9))
        sched = HamiltonianSchedule.constant(np.diag([5.0, -1.0]))
        res = lvn_residual(inv, sched)
        assert np.max(res) < 1e-13

    def test_transported_at_floor_with_factor4_decay(self):
        k, i0, sched, _, period = cranked_setup(steps=256)
        maxima = []
        for steps in (512, 1024):
            path = evolve(sched, period, steps=steps, tol=1e-10)
            inv = transport(path, i0)
            maxima.append(np.max(lvn_residual(inv, sched)))
        scale = frob(i0)
        assert maxima[0] < 1e-3 * scale
        # 2nd-order stencil: error shrinks ~4x per halving
        assert maxima[0] / maxima[1] > 3.0

    def test_invariant_for_both_hamiltonians(self):
        # I(t) = e^{-iKt} I0 e^{iKt} with [I0, H0 - K] = 0 satisfies the
        # LvN equation against the cranked H(t) and against constant K.
        k, i0, sched, path, period = cranked_setup(steps=1024)
        inv = transport(path, i0)
        res_h = np.max(lvn_residual(inv, sched))
        res_k = np.max(lvn_residual(
            inv, HamiltonianSchedule.constant(k)))
        scale = frob(i0)
        assert res_h < 1e-3 * scale
        assert res_k < 1e-3 * scale

    def test_grid_too_coarse(self):
        grid = np.array([0.0, 1.0])
        inv = InvariantPath(grid, np.stack([np.eye(2, dtype=complex)] * 2))
        with pytest.raises(GridTooCoarse):
            lvn_residual(inv, HamiltonianSchedule.constant(np.eye(2)))


class TestEigenframe:
    def test_constant_diagonal(self):
        grid = np.linspace(0, 1, 8)
        i0 = np.diag([1.0, 2.0, 3.0]).astype(complex)
        inv = InvariantPath(grid, np.stack([i0] * 8))
        frame = eigenframe(inv)
        assert frame.n_blocks == 3
        assert np.all(frame.degeneracies == 1)
        for w in frame.frames:
            assert np.allclose(w, np.eye(3), atol=1e-12)

    def test_parallel_transport_convention(self):
        k, i0, _, path, _ = cranked_setup()
        frame = eigenframe(transport(path, i0))
        v = frame.frames
        for n in range(frame.dim):
            overlaps = np.sum(v[:-1, :, n].conj() * v[1:, :, n], axis=1)
            assert np.all(np.abs(overlaps.imag) < 1e-12)
            assert np.all(overlaps.real > 0.99)

    def test_eigen_residual_and_orthonormality(self):
        k, i0, _, path, _ = cranked_setup()
        inv = transport(path, i0)
        frame = eigenframe(inv)
        frame.validate(inv)

    def test_reconstruct_invariant(self):
        k, i0, _, path, _ = cranked_setup()
        inv = transport(path, i0)
        frame = eigenframe(inv)
        lam = np.repeat(frame.eigenvalues, frame.degeneracies)
        for k_pt in (0, 100, 512):
            w = frame.frames[k_pt]
            recon = (w * lam) @ w.conj().T
            assert frob(recon - inv.samples[k_pt]) < 1e-8 * frob(i0)

    def test_periodic_closure_and_redistribution(self):
        k, i0, _, path, _ = cranked_setup()
        inv = transport(path, i0)
        open_frame = eigenframe(inv, enforce_periodic=False)
        closed = eigenframe(inv, enforce_periodic=True)
        assert closed.periodic
        assert np.array_equal(closed.frames[-1], closed.frames[0])
        # redistribution is a pure per-step phase on each eigenvector
        n_iv = closed.grid.size - 1
        for n in range(closed.dim):
            theta = np.angle(np.vdot(open_frame.frames[-1][:, n],
                                     open_frame.frames[0][:, n]))
            k_mid = n_iv // 2
            expected = open_frame.frames[k_mid][:, n] * np.exp(
                1j * theta * k_mid / n_iv)
            assert np.linalg.norm(
                closed.frames[k_mid][:, n] - expected) < 1e-12

    def test_matches_analytic_rotating_frame(self):
        # I(t) = e^{-iKt} I0 e^{iKt}: columns of e^{-iKt} V0 are an
        # analytic eigenframe; numeric frame matches up to per-vector phase
        k, i0, _, path, _ = cranked_setup()
        inv = transport(path, i0)
        frame = eigenframe(inv)
        _, v0 = np.linalg.eigh(i0)
        for k_pt in (64, 256, 511):
            t = frame.grid[k_pt]
            analytic = expm_igen(k, t) @ frame.frames[0]
            for n in range(frame.dim):
                ov = abs(np.vdot(analytic[:, n], frame.frames[k_pt][:, n]))
                assert ov > 1 - 1e-6

    def test_degenerate_blocks_doubled_system(self):
        k, i0, _, path, _ = cranked_setup(dim=4, steps=256)
        inv = transport(path, i0)
        doubled = InvariantPath(
            inv.grid, np.stack([np.kron(s, np.eye(2)) for s in inv.samples]))
        frame = eigenframe(doubled, enforce_periodic=True)
        assert np.all(frame.degeneracies == 2)
        frame.validate(doubled)
        assert np.array_equal(frame.frames[-1], frame.frames[0])

    def test_degeneracy_crossing(self):
        grid = np.linspace(0, 1, 9)
        samples = np.stack([np.diag([0.0, 1.0, 1.0])] * 9).astype(complex)
        samples[1] = np.diag([0.0, 1.0 - 1e-3, 1.0])
        with pytest.raises(DegeneracyCrossing):
            eigenframe(InvariantPath(grid, samples))

    def test_overlap_too_small(self):
        grid = np.arange(5.0)
        c, s = np.cos(1.4), np.sin(1.4)
        r = np.array([[c, -s], [s, c]])
        samples = np.stack([
            np.linalg.matrix_power(r, k) @ np.diag([1.0, 2.0])
            @ np.linalg.matrix_power(r, k).T for k in range(5)
        ]).astype(complex)
        with pytest.raises(OverlapTooSmall):
            eigenframe(InvariantPath(grid, samples))

    def test_spectrum_drift_detected_midpath(self):
        grid = np.linspace(0, 1, 9)
        samples = np.stack([np.diag([1.0, 2.0])] * 9).astype(complex)
        samples[1] = np.diag([1.0 + 1e-6, 2.0])
        with pytest.raises(ComputeError):
            eigenframe(InvariantPath(grid, samples))

    def test_commutes_with_loop_operator(self):
        # periodic invariant => [U(T), I(0)] = 0
        k, i0, sched, path, period = cranked_setup()
        u_T = path.at(period)
        assert comm_norm(u_T, i0) < 1e-7 * frob(i0)


class TestBuildGeq:
    def test_zero_x(self):
        k, i0, sched, path, _ = cranked_setup(dim=4, steps=128)
        zero = HamiltonianSchedule.constant(np.zeros((4, 4)))
        h2 = build_geq(sched, zero, invariant=transport(path, i0))
        for t in (0.0, 1.0):
            assert np.allclose(h2.sample(t), sched.sample(t), atol=1e-15)

    def test_scalar_invariant_x(self):
        k, i0, sched, path, _ = cranked_setup(dim=4, steps=128)
        inv = transport(path, i0)
        x = HamiltonianSchedule.from_callable(
            lambda t: np.sin(t) * (expm_igen(k, t) @ i0 @ expm_igen(k, -t)),
            4)
        h2 = build_geq(sched, x, invariant=inv)
        t = 1.5
        expected = sched.sample(t) + np.sin(t) * (
            expm_igen(k, t) @ i0 @ expm_igen(k, -t))
        assert frob(h2.sample(t) - expected) < 1e-10

    def test_symmetry_violation_names_point(self):
        k, i0, sched, path, _ = cranked_setup(dim=4, steps=128)
        inv = transport(path, i0)
        bad = HamiltonianSchedule.constant(random_hermitian(4, 5))
        with pytest.raises(SymmetryViolation) as exc:
            build_geq(sched, bad, invariant=inv)
        assert "t=" in str(exc.value)

    def test_symmetry_check_reports_worst(self):
        k, i0, sched, path, _ = cranked_setup(dim=4, steps=128)
        inv = transport(path, i0)
        x = HamiltonianSchedule.from_callable(
            lambda t: np.cos(t) * (expm_igen(k, t) @ i0 @ expm_igen(k, -t)),
            4)
        worst = symmetry_check(x, inv)
        assert worst < 1e-8


class TestHstar:
    def test_constant_frame_zero(self):
        grid = np.linspace(0, 1, 16)
        i0 = np.diag([1.0, 2.0, 3.0]).astype(complex)
        inv = InvariantPath(grid, np.stack([i0] * 16))
        sched = hstar(eigenframe(inv))
        assert frob(sched.sample(0.5)) < 1e-10

    def test_evolution_operator_is_frame(self):
        # U*(t) = W(t) W(0)^+ for the purely geometric Hamiltonian
        k, i0, _, path, period = cranked_setup(steps=1024)
        inv = transport(path, i0)
        frame = eigenframe(inv, enforce_periodic=True)
        sched = hstar(frame)
        star = evolve(sched, period, steps=1024, tol=1e-8,
                      store=[period / 4, period / 2, period])
        w0 = frame.initial()
        for t in (period / 4, period / 2):
            k_pt = frame.grid[np.argmin(np.abs(frame.grid - t))]
            idx = int(np.argmin(np.abs(frame.grid - t)))
            expected = frame.frames[idx] @ w0.conj().T
            assert frob(star.at(t) - expected) < 1e-5
        assert frob(star.at(period) - np.eye(frame.dim)) < 1e-5

    def test_characterization_h_minus_hstar_is_symmetry(self):
        # any H admitting I splits as H = H* + X with [I, X] = 0
        k, i0, sched, path, period = cranked_setup(steps=1024)
        inv = transport(path, i0)
        frame = eigenframe(inv, enforce_periodic=True)
        hs = hstar(frame)
        x = HamiltonianSchedule.from_callable(
            lambda t: sched.sample(t) - hs.sample(t), sched.dim)
        worst = symmetry_check(x, inv, rel_tol=1e-5)
        assert worst < 1e-6

    def test_grid_too_coarse(self):
        grid = np.linspace(0, 1, 4)
        i0 = np.diag([1.0, 2.0]).astype(complex)
        inv = InvariantPath(grid, np.stack([i0] * 4))
        with pytest.raises(GridTooCoarse):
            hstar(eigenframe(inv))


class TestGaugeTransform:
    def _frame(self):
        k, i0, _, path, period = cranked_setup(steps=512)
        inv = transport(path, i0)
        return eigenframe(inv, enforce_periodic=True), period

    def test_identity_gauge(self):
        frame, period = self._frame()
        z = np.stack([np.eye(frame.dim, dtype=complex)] * frame.grid.size)
        primed, sched = gauge_transform(frame, z)
        assert np.array_equal(primed.frames, frame.frames)

    def test_constant_gauge(self):
        frame, period = self._frame()
        phases = np.exp(1j * np.linspace(0.1, 2.0, frame.dim))
        z0 = np.diag(phases)
        z = np.stack([z0] * frame.grid.size)
        primed, sched_p = gauge_transform(frame, z)
        sched = hstar(frame)
        # H*' = H* for constant gauges; U*' = U* Z
        for t in (0.5, 3.0):
            assert frob(sched_p.sample(t) - sched.sample(t)) < 1e-8
        assert frob(primed.frames[7] - frame.frames[7] @ z0) < 1e-14

    def test_periodic_phase_gauge_keeps_closure(self):
        frame, period = self._frame()
        n_pts = frame.grid.size
        thetas = np.sin(2 * np.pi * np.arange(n_pts) / (n_pts - 1))
        z = np.stack([
            np.diag(np.exp(1j * th * np.arange(1, frame.dim + 1)))
            for th in thetas
        ])
        primed, _ = gauge_transform(frame, z)
        assert primed.periodic

    def test_mixing_gauge_rejected(self):
        frame, period = self._frame()
        x = np.eye(frame.dim)
        x[:2, :2] = [[0, 1], [1, 0]]  # swaps two eigenvectors
        z = np.stack([x.astype(complex)] * frame.grid.size)
        with pytest.raises(SymmetryViolation):
            gauge_transform(frame, z)

    def test_grid_mismatch(self):
        frame, period = self._frame()
        grid = np.linspace(0, period, 8)
        z = UnitaryPath(grid, np.stack([np.eye(frame.dim, dtype=complex)] * 8))
        with pytest.raises(DimensionMismatch):
            gauge_transform(frame, z)
