"""Phase extraction from invariant eigenframes.

Given a smooth eigenframe of a dynamical invariant and the Hamiltonian that
drives the evolution, this module computes per-block projected matrices

* ``E^n_{ab}(t) = <lam_n,a;t| H(t) |lam_n,b;t>``  (energy projections),
* ``A^n_{ab}(t) = i <lam_n,a;t| d/dt |lam_n,b;t>`` (frame connection),
* ``Delta^n = E^n - A^n``,

solves the block Schrodinger equation ``i du^n/dt = Delta^n u^n``, forms the
Abelian phase angles ``delta_n(t) = -int E^n`` and ``gamma_n(t) = int A^n``
(dynamical and geometric), the non-Abelian holonomy
``Gamma^n(T) = T-exp(i int_0^T A^n dt)``, reconstructs the full evolution
operator from invariant data, and splits measured cyclic phases into
dynamical and geometric parts.

The geometric quantities depend only on the frame: ``A^n`` never references
``H``, so every Hamiltonian in one geometric-equivalence class shares them.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_simpson

from . import linalg
from .errors import (
    ComputeError,
    DegenerateEigenvalue,
    DimensionMismatch,
    GridTooCoarse,
    IncompleteRecord,
    NotCyclic,
)
from .invariant import InvariantFrame, frame_derivative
from .linalg import expm_igen, frob, hermitize
from .propagator import (
    HamiltonianSchedule,
    UnitaryPath,
    _adaptive_step,
)

__all__ = [
    "PhaseRecord",
    "PhaseSplit",
    "project",
    "solve_un",
    "abelian_phases",
    "nonabelian_holonomy",
    "reconstruct_U",
    "total_phase_decompose",
    "wrap_angle",
]


def wrap_angle(theta):
    """Reduce an angle (or array) to the principal branch (-pi, pi]."""
    out = np.mod(np.asarray(theta) + np.pi, 2 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return float(out) if np.isscalar(theta) else out


class PhaseRecord:
    """Projected phase data of one (frame, Hamiltonian) pair.

    Attributes
    ----------
    grid : ndarray
        Time grid (inherited from the frame).
    eigenvalues, degeneracies : ndarray
        Invariant block structure.
    E, A, Delta : list of ndarray
        Per block ``n``, series of shape ``(len(grid), d_n, d_n)`` with
        ``Delta[n] = E[n] - A[n]`` exactly as stored.
    a_residual : float
        Worst anti-Hermitian defect removed from ``A`` by symmetrization.
    u : list of ndarray or None
        Block evolution ``u^n(t)`` once :func:`solve_un` has run
        (``u[n][0]`` is the identity).
    delta_angle, gamma_angle : dict
        Per nondegenerate block, continuous (unwrapped) angle series
        ``delta_n(t)`` and ``gamma_n(t)`` once :func:`abelian_phases` has
        run.
    Gamma_T : dict
        Per block, the holonomy ``Gamma^n(T)`` once
        :func:`nonabelian_holonomy` has run.
    total_phase : dict
        ``(n, a) -> complex unit`` once :func:`total_phase_decompose` ran.
    """

    def __init__(self, frame: InvariantFrame, E, A, a_residual):
        self.grid = frame.grid
        self.eigenvalues = frame.eigenvalues
        self.degeneracies = frame.degeneracies
        self.frame = frame
        self.E = E
        self.A = A
        self.Delta = [e - a for e, a in zip(E, A)]
        self.a_residual = float(a_residual)
        self.u = None
        self.u_tol_achieved = None
        self.delta_angle = {}
        self.gamma_angle = {}
        self.Gamma_T = {}
        self.total_phase = {}

    @property
    def n_blocks(self) -> int:
        return self.eigenvalues.size

    def require_nondegenerate(self, n: int) -> None:
        if self.degeneracies[n] != 1:
            raise DegenerateEigenvalue(
                f"block n={n} (eigenvalue {self.eigenvalues[n]:.6g}) has "
                f"degeneracy {self.degeneracies[n]}; Abelian angles are "
                "defined for d_n = 1 only")

    def __repr__(self):
        return (f"PhaseRecord(blocks={self.n_blocks}, "
                f"points={self.grid.size}, "
                f"u={'filled' if self.u is not None else 'empty'})")


def project(frame: InvariantFrame, schedule: HamiltonianSchedule
            ) -> PhaseRecord:
    """Project ``H`` and the frame connection onto invariant eigenblocks.

    ``E^n`` comes from sandwiching ``H(t_k)`` between block columns;
    ``A^n = i V^+ dV/dt`` uses five-point central differences (periodic
    wraparound for periodic frames) and is Hermitized by symmetric
    averaging, with the discarded defect reported as ``a_residual``.

    Raises
    ------
    GridTooCoarse
        If the frame has fewer than 5 points.
    """
    grid = frame.grid
    if grid.size < 5:
        raise GridTooCoarse("project needs at least 5 grid points")
    if schedule.dim != frame.dim:
        raise DimensionMismatch("frame and schedule dims differ")
    h = float(grid[1] - grid[0])
    vdot = frame_derivative(frame.frames, h, frame.periodic)
    n_pts = grid.size
    E = [np.empty((n_pts, d, d), dtype=complex)
         for d in frame.degeneracies]
    A = [np.empty((n_pts, d, d), dtype=complex)
         for d in frame.degeneracies]
    a_residual = 0.0
    slices = [frame.block_slice(n) for n in range(frame.n_blocks)]
    for k in range(n_pts):
        w = frame.frames[k]
        hw = schedule.sample(grid[k]) @ w
        aw = 1j * (w.conj().T @ vdot[k])
        for n, sl in enumerate(slices):
            E[n][k] = hermitize(w[:, sl].conj().T @ hw[:, sl])
            raw = aw[sl, sl]
            herm = hermitize(raw)
            a_residual = max(a_residual, frob(raw - herm))
            A[n][k] = herm
    return PhaseRecord(frame, E, A, a_residual)


def solve_un(record: PhaseRecord, tol: float = 1e-10) -> PhaseRecord:
    """Integrate the block Schrodinger equation ``i du^n/dt = Delta^n u^n``.

    Uses the same commutator-free exponential stepper as
    :func:`invphase.propagator.evolve` on each block's ``Delta`` series
    (cubic interpolation between grid samples); fills ``record.u`` in
    place and returns the record.

    Raises
    ------
    ToleranceNotMet
        If a step's doubling estimate cannot be brought under ``tol``.
    """
    grid = record.grid
    n_pts = grid.size
    us = []
    err_max = 0.0
    for n in range(record.n_blocks):
        d = int(record.degeneracies[n])
        delta = record.Delta[n]
        # periodic interpolation only when the series itself closes
        period = None
        if record.frame.periodic:
            scale = max(float(np.linalg.norm(delta[0])), 1e-300)
            if np.linalg.norm(delta[-1] - delta[0]) <= 1e-10 * max(scale, 1.0):
                period = grid[-1]
        sched = HamiltonianSchedule.from_samples(
            grid, delta, period=period, label=f"Delta^{n}")
        u = np.empty((n_pts, d, d), dtype=complex)
        u[0] = np.eye(d)
        acc = np.eye(d, dtype=complex)
        for k in range(n_pts - 1):
            h = grid[k + 1] - grid[k]
            transfer, err = _adaptive_step(sched, grid[k], h, tol)
            acc = transfer @ acc
            err_max = max(err_max, err)
            u[k + 1] = acc
        us.append(u)
    record.u = us
    record.u_tol_achieved = err_max
    return record


def abelian_phases(record: PhaseRecord, n: int = None) -> PhaseRecord:
    """Cyclic dynamical and geometric phase angles for nondegenerate blocks.

    ``delta_n(t) = -int_0^t E^n`` and ``gamma_n(t) = int_0^t A^n`` by
    composite Simpson quadrature; the series are continuous (unwrapped)
    accumulations along the grid.  Fills ``record.delta_angle[n]`` /
    ``record.gamma_angle[n]`` for every nondegenerate block (or just the
    requested one) and returns the record.

    Raises
    ------
    DegenerateEigenvalue
        If a specific degenerate block is requested.
    """
    targets = range(record.n_blocks) if n is None else [n]
    for m in targets:
        if n is not None:
            record.require_nondegenerate(m)
        elif record.degeneracies[m] != 1:
            continue
        e_series = record.E[m][:, 0, 0].real
        a_series = record.A[m][:, 0, 0].real
        delta = -np.concatenate(
            ([0.0], cumulative_simpson(e_series, x=record.grid)))
        gamma = np.concatenate(
            ([0.0], cumulative_simpson(a_series, x=record.grid)))
        record.delta_angle[m] = delta
        record.gamma_angle[m] = gamma
    return record


def nonabelian_holonomy(record: PhaseRecord, T: float = None) -> PhaseRecord:
    """Non-Abelian holonomy ``Gamma^n(T) = T-exp(i int_0^T A^n dt)``.

    Discretized with midpoint sampling: per step, the exponential of
    ``i (A_k + A_{k+1})/2 * dt``, composed in time order.  Fills
    ``record.Gamma_T`` and returns the record.
    """
    grid = record.grid
    if T is None:
        T = grid[-1]
    k_end = int(np.argmin(np.abs(grid - T)))
    if abs(grid[k_end] - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError(f"T={T} is not on the record grid")
    for n in range(record.n_blocks):
        d = int(record.degeneracies[n])
        a = record.A[n]
        gam = np.eye(d, dtype=complex)
        for k in range(k_end):
            h = grid[k + 1] - grid[k]
            mid = 0.5 * (a[k] + a[k + 1])
            gam = expm_igen(mid, -h, check_hermitian=False) @ gam
        defect = frob(gam @ gam.conj().T - np.eye(d))
        if defect > 1e-8 * d:
            raise ComputeError(
                f"holonomy block n={n} lost unitarity: defect {defect:.3e}")
        record.Gamma_T[n] = gam
    return record


def reconstruct_U(frame: InvariantFrame, record: PhaseRecord) -> UnitaryPath:
    """Rebuild the evolution operator from invariant data.

    ``U(t) = sum_n sum_ab u^n_ab(t) |lam_n,a;t><lam_n,b;0|``, i.e.
    ``W(t) . blockdiag(u^n(t)) . W(0)^+``; must match ``evolve`` of the
    corresponding Hamiltonian on the interior block to 1e-6.

    Raises
    ------
    IncompleteRecord
        If ``solve_un`` has not been run.
    """
    if record.u is None:
        raise IncompleteRecord("u series missing: run solve_un first")
    grid = frame.grid
    n_pts = grid.size
    dim = frame.dim
    w0h = frame.initial().conj().T
    samples = np.empty((n_pts, dim, dim), dtype=complex)
    slices = [frame.block_slice(n) for n in range(frame.n_blocks)]
    for k in range(n_pts):
        block = np.zeros((dim, dim), dtype=complex)
        for n, sl in enumerate(slices):
            block[sl, sl] = record.u[n][k]
        samples[k] = frame.frames[k] @ block @ w0h
    samples[0] = np.eye(dim)
    return UnitaryPath(grid, samples,
                       tol_achieved=record.u_tol_achieved or 0.0)


class PhaseSplit:
    """Cyclic-phase decomposition of one invariant eigenstate.

    Angles are radians; ``total_unit``/``dynamical_unit``/``geometric_unit``
    are the corresponding complex units ``exp(i * angle)``.  ``dynamical``
    is the unwrapped ``delta_n(T)``; ``geometric`` is ``total - dynamical``
    reduced to the principal branch; ``fidelity`` is the return probability
    ``|<lam_n,a;0|U(T)|lam_n,a;0>|``; ``cross_check`` is the principal-
    branch distance between ``geometric`` and the frame-integral
    ``gamma_n(T)``.
    """

    __slots__ = ("n", "a", "total", "dynamical", "geometric", "fidelity",
                 "cross_check")

    def __init__(self, n, a, total, dynamical, geometric, fidelity,
                 cross_check):
        self.n = n
        self.a = a
        self.total = total
        self.dynamical = dynamical
        self.geometric = geometric
        self.fidelity = fidelity
        self.cross_check = cross_check

    @property
    def total_unit(self):
        return np.exp(1j * self.total)

    @property
    def dynamical_unit(self):
        return None if self.dynamical is None else np.exp(1j * self.dynamical)

    @property
    def geometric_unit(self):
        return None if self.geometric is None else np.exp(1j * self.geometric)

    def __repr__(self):
        return (f"PhaseSplit(n={self.n}, a={self.a}, total={self.total:.9g}, "
                f"dynamical={self.dynamical}, geometric={self.geometric})")


def total_phase_decompose(path: UnitaryPath, frame: InvariantFrame,
                          record: PhaseRecord, T: float = None) -> dict:
    """Split measured cyclic phases into dynamical and geometric parts.

    For each invariant eigenstate ``|lam_n,a;0>``: the total phase is
    ``arg <lam_n,a;0| U(T) |lam_n,a;0>``; for nondegenerate blocks the
    dynamical part is ``delta_n(T)`` from the ``E``-integral and the
    geometric part is ``total - dynamical`` on the principal branch,
    cross-checked against the frame-integral ``gamma_n(T)``.  Degenerate
    blocks receive the total only.  Returns ``{(n, a): PhaseSplit}`` and
    fills ``record.total_phase``.

    Raises
    ------
    NotCyclic
        If some return amplitude has modulus below ``1 - 1e-6``.
    """
    if not frame.periodic:
        raise ValueError("total_phase_decompose needs a periodic frame")
    if T is None:
        T = frame.grid[-1]
    u_T = path.at(T)
    if path.dim != frame.dim:
        raise DimensionMismatch("path and frame dims differ")
    if not record.delta_angle:
        abelian_phases(record)
    out = {}
    w0 = frame.initial()
    m = w0.conj().T @ u_T @ w0
    for n in range(frame.n_blocks):
        sl = frame.block_slice(n)
        block = m[sl, sl]
        nondeg = record.degeneracies[n] == 1
        for a in range(int(record.degeneracies[n])):
            c = block[a, a]
            fidelity = abs(c)
            if fidelity < 1 - 1e-6:
                raise NotCyclic(
                    f"state (n={n}, a={a}) returned with amplitude "
                    f"{fidelity:.8f} < 1 - 1e-6: evolution is not cyclic "
                    f"at T={T:.6g}")
            total = float(np.angle(c))
            dynamical = geometric = cross = None
            if nondeg:
                dynamical = float(record.delta_angle[n][-1])
                geometric = wrap_angle(total - dynamical)
                gamma_ref = float(record.gamma_angle[n][-1])
                cross = abs(wrap_angle(geometric - gamma_ref))
            split = PhaseSplit(n, a, total, dynamical, geometric,
                               fidelity, cross)
            out[(n, a)] = split
            record.total_phase[(n, a)] = np.exp(1j * total)
    return out
