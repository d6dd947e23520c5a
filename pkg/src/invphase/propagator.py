"""Unitary propagation of the operator Schrodinger equation.

Integrates ``i dU/dt = H(t) U(t)`` with a commutator-free fourth-order
exponential integrator (two Gauss-node exponentials per step, each computed
spectrally so every factor is exactly unitary), estimates the local error by
step-doubling, composes evolution operators of geometrically equivalent
systems, and detects evolution loops ``U(t) = c * identity``.

Design notes
------------
* Time step for interval ``[t0, t0+h]``::

      H1 = H(t0 + (1/2 - sqrt(3)/6) h),  H2 = H(t0 + (1/2 + sqrt(3)/6) h)
      step = exp(-i h (a2 H1 + a1 H2)) @ exp(-i h (a1 H1 + a2 H2))

  with ``a1 = 1/4 + sqrt(3)/6`` and ``a2 = 1/4 - sqrt(3)/6``.  For constant
  ``H`` this collapses to ``exp(-i h H)`` exactly.
* Local error per step is ``||step_coarse - step_fine||_F`` (unitarily
  invariant, so no reference propagator is needed); the fine value is kept.
  Intervals whose estimate exceeds ``tol`` are split recursively.
* Constant schedules bypass the stepper: ``U(t) = expm_igen(H, t)`` from a
  single eigendecomposition.
* No interpolation between stored grid points is offered; consumers sample
  on the grid.
"""

from __future__ import annotations

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatch,
    GridTooCoarse,
    SymmetryViolation,
    ToleranceNotMet,
)
from .linalg import OperatorMatrix, expm_igen, frob, hermitize

__all__ = [
    "HamiltonianSchedule",
    "UnitaryPath",
    "evolve",
    "compose_geq",
    "loop_check",
]

_SQRT3 = np.sqrt(3.0)
_GAUSS_C1 = 0.5 - _SQRT3 / 6.0
_GAUSS_C2 = 0.5 + _SQRT3 / 6.0
_CF4_A1 = 0.25 + _SQRT3 / 6.0
_CF4_A2 = 0.25 - _SQRT3 / 6.0

#: default integration density (intervals per characteristic period)
DEFAULT_STEPS_PER_PERIOD = 2048

_MAX_SPLIT_DEPTH = 16


class HamiltonianSchedule:
    """Time-dependent Hermitian generator ``t -> H(t)``.

    Construct through one of the classmethods:

    * :meth:`constant` -- a fixed Hermitian matrix,
    * :meth:`from_callable` -- an arbitrary smooth map ``t -> matrix``,
    * :meth:`scalar_profile` -- ``H(t) = f(t) * H0`` (commuting family),
    * :meth:`from_samples` -- matrices tabulated on a uniform grid,
      interpolated with cubic Lagrange stencils (periodic wraparound when
      the table spans one declared period).

    Parameters validated on construction: every probed sample is Hermitian
    (defect at most ``1e-12 * max(1, max|H|)``), and when a ``period`` is
    declared, ``||H(t+T) - H(t)||_F <= 1e-10 * ||H(t)||_F`` on probe points.
    """

    def __init__(self):
        raise TypeError(
            "use HamiltonianSchedule.constant / .from_callable / "
            ".scalar_profile / .from_samples")

    @classmethod
    def _bare(cls):
        obj = object.__new__(cls)
        obj.dim = 0
        obj.period = None
        obj.label = ""
        obj._kind = ""
        obj._fn = None
        obj._matrix = None          # constant / scalar-profile base
        obj._eig = None             # cached (w, v) of the base matrix
        obj._profile = None         # scalar profile f(t)
        obj._grid = None            # sampled-table grid
        obj._table = None           # sampled-table values
        return obj

    # ------------------------------------------------------------------ #
    # constructors
    # ------------------------------------------------------------------ #

    @classmethod
    def constant(cls, matrix, *, label="constant"):
        """Schedule for a time-independent Hermitian ``matrix``."""
        obj = cls._bare()
        arr = hermitize(cls._check_hermitian(matrix, "constant matrix"))
        arr.setflags(write=False)
        obj.dim = arr.shape[0]
        obj.label = label
        obj._kind = "constant"
        obj._matrix = arr
        return obj

    @classmethod
    def from_callable(cls, fn, dim, *, period=None, label="callable"):
        """Schedule wrapping ``fn(t) -> (dim, dim) Hermitian array``."""
        obj = cls._bare()
        obj.dim = int(dim)
        obj.period = cls._check_period(period)
        obj.label = label
        obj._kind = "callable"
        obj._fn = fn
        probe = obj.sample(0.0)
        if probe.shape != (obj.dim, obj.dim):
            raise DimensionMismatch(
                f"callable returned shape {probe.shape}, "
                f"expected ({dim}, {dim})")
        obj._check_periodicity()
        return obj

    @classmethod
    def scalar_profile(cls, profile, base, *, period=None,
                       label="scalar-profile"):
        """Schedule ``H(t) = profile(t) * base`` with Hermitian ``base``."""
        obj = cls._bare()
        arr = hermitize(cls._check_hermitian(base, "profile base"))
        arr.setflags(write=False)
        obj.dim = arr.shape[0]
        obj.period = cls._check_period(period)
        obj.label = label
        obj._kind = "scalar_profile"
        obj._matrix = arr
        obj._profile = profile
        float(profile(0.0))  # must be real scalar
        obj._check_periodicity()
        return obj

    @classmethod
    def from_samples(cls, grid, samples, *, period=None, label="sampled"):
        """Schedule from Hermitian matrices tabulated on a uniform grid.

        ``grid`` must be uniform, start at 0 and be strictly increasing.
        Evaluation uses 4-point cubic Lagrange interpolation; when
        ``period == grid[-1]`` the stencil wraps around periodically and
        arbitrary ``t`` is reduced modulo the period.
        """
        grid = np.asarray(grid, dtype=float)
        table = np.asarray(samples, dtype=complex)
        if grid.ndim != 1 or grid.size < 4:
            raise GridTooCoarse(
                "sampled schedule needs at least 4 grid points")
        if table.shape[0] != grid.size:
            raise DimensionMismatch(
                f"{table.shape[0]} samples for {grid.size} grid points")
        deltas = np.diff(grid)
        if grid[0] != 0.0 or np.any(deltas <= 0):
            raise ValueError("grid must start at 0 and strictly increase")
        if not np.allclose(deltas, deltas[0], rtol=1e-10, atol=0.0):
            raise ValueError("sampled schedule requires a uniform grid")
        for k in (0, grid.size // 2, grid.size - 1):
            cls._check_hermitian(table[k], f"sample {k}")
        obj = cls._bare()
        obj.dim = table.shape[1]
        obj.period = cls._check_period(period)
        obj.label = label
        obj._kind = "sampled"
        obj._grid = grid
        obj._table = 0.5 * (table + np.conj(np.swapaxes(table, 1, 2)))
        if obj.period is not None:
            if not np.isclose(obj.period, grid[-1], rtol=1e-12):
                raise ValueError(
                    "periodic sampled schedule must be tabulated over "
                    "exactly one period")
            wrap = frob(obj._table[-1] - obj._table[0])
            if wrap > 1e-10 * max(frob(obj._table[0]), 1e-300):
                raise ValueError(
                    f"samples at t=0 and t=period differ by {wrap:.3e}")
        return obj

    # ------------------------------------------------------------------ #
    # validation helpers
    # ------------------------------------------------------------------ #

    @staticmethod
    def _check_period(period):
        if period is None:
            return None
        period = float(period)
        if period <= 0:
            raise ValueError("period must be positive")
        return period

    @staticmethod
    def _check_hermitian(matrix, what):
        arr = np.asarray(
            matrix.array if isinstance(matrix, OperatorMatrix) else matrix,
            dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionMismatch(f"{what}: expected square matrix")
        scale = max(1.0, float(np.max(np.abs(arr))) if arr.size else 0.0)
        defect = linalg.herm_defect(arr)
        if defect > 1e-12 * scale:
            from .errors import NonHermitianInput
            raise NonHermitianInput(
                f"{what}: hermiticity defect {defect:.3e} > 1e-12*{scale:.3e}")
        return arr

    def _check_periodicity(self):
        if self.period is None:
            return
        for t in (0.0, 0.31 * self.period, 0.77 * self.period):
            a = self.sample(t)
            b = self.sample(t + self.period)
            ref = max(frob(a), 1e-300)
            if frob(b - a) > 1e-10 * ref:
                raise ValueError(
                    f"declared period {self.period} violated at t={t}: "
                    f"relative defect {frob(b - a) / ref:.3e}")

    # ------------------------------------------------------------------ #
    # evaluation
    # ------------------------------------------------------------------ #

    @property
    def is_constant(self) -> bool:
        return self._kind == "constant"

    @property
    def kind(self) -> str:
        return self._kind

    def base_eig(self):
        """Cached eigendecomposition of the constant/profile base matrix."""
        if self._matrix is None:
            raise ValueError("schedule has no base matrix")
        if self._eig is None:
            self._eig = linalg.eigh(self._matrix, check_hermitian=False)
        return self._eig

    def sample(self, t: float) -> np.ndarray:
        """Raw Hermitian ndarray H(t) (hot-path evaluation)."""
        if self._kind == "constant":
            return self._matrix
        if self._kind == "scalar_profile":
            return float(self._profile(t)) * self._matrix
        if self._kind == "callable":
            arr = self._check_hermitian(self._fn(t), f"H({t})")
            return hermitize(arr)
        return self._interp(t)

    def eval(self, t: float) -> OperatorMatrix:
        """H(t) as an OperatorMatrix with the hermitian flag validated."""
        return OperatorMatrix(self.sample(t), flags=("hermitian",))

    def __call__(self, t: float) -> np.ndarray:
        return self.sample(t)

    def _interp(self, t: float) -> np.ndarray:
        grid, table = self._grid, self._table
        n_iv = grid.size - 1
        step = grid[1] - grid[0]
        if self.period is not None:
            t = t % self.period
        s = t / step
        j0 = int(np.floor(s))
        u = s - j0
        if self.period is not None:
            idx = [(j0 + off) % n_iv for off in (-1, 0, 1, 2)]
        else:
            if t < grid[0] - 1e-9 * step or t > grid[-1] + 1e-9 * step:
                raise ValueError(
                    f"t={t} outside tabulated range [0, {grid[-1]}]")
            j0 = min(max(j0, 1), n_iv - 2)
            u = s - j0
            idx = [j0 - 1, j0, j0 + 1, j0 + 2]
        w = (
            -u * (u - 1.0) * (u - 2.0) / 6.0,
            (u * u - 1.0) * (u - 2.0) / 2.0,
            -u * (u + 1.0) * (u - 2.0) / 2.0,
            u * (u * u - 1.0) / 6.0,
        )
        out = w[0] * table[idx[0]]
        for c, j in zip(w[1:], idx[1:]):
            if c != 0.0:
                out += c * table[j]
        return hermitize(out)

    def __repr__(self):
        return (f"HamiltonianSchedule(kind={self._kind!r}, dim={self.dim}, "
                f"period={self.period}, label={self.label!r})")


class UnitaryPath:
    """Evolution operator sampled on a time grid.

    Attributes
    ----------
    grid : ndarray
        Strictly increasing stored times, starting at 0.
    samples : ndarray, shape (len(grid), dim, dim)
        Unitary ``U(t)`` at each stored time; ``samples[0]`` is the identity.
    tol_achieved : float
        Largest step-doubling local-error estimate seen during integration.
    drift_max : float
        Largest unitarity defect ``||U U^H - 1||_F`` observed before any
        re-unitarization.
    """

    def __init__(self, grid, samples, tol_achieved=0.0, drift_max=0.0):
        grid = np.asarray(grid, dtype=float)
        samples = np.asarray(samples, dtype=complex)
        if grid.ndim != 1 or samples.ndim != 3 or samples.shape[0] != grid.size:
            raise DimensionMismatch("grid and samples are inconsistent")
        if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must start at 0 and strictly increase")
        dim = samples.shape[1]
        if frob(samples[0] - np.eye(dim)) > 1e-12:
            raise ValueError("samples[0] must be the identity")
        self.grid = grid
        self.samples = samples
        self.tol_achieved = float(tol_achieved)
        self.drift_max = float(drift_max)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.grid.size

    def index_of(self, t: float) -> int:
        """Index of grid point ``t`` (raises if ``t`` is not on the grid)."""
        k = int(np.argmin(np.abs(self.grid - t)))
        if abs(self.grid[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not on the stored grid")
        return k

    def at(self, t: float) -> np.ndarray:
        """Stored unitary at grid time ``t``."""
        return self.samples[self.index_of(t)]

    def final(self) -> np.ndarray:
        """Stored unitary at the last grid time."""
        return self.samples[-1]

    def operator(self, t: float) -> OperatorMatrix:
        """``U(t)`` wrapped with the unitary flag validated."""
        return OperatorMatrix(self.at(t), flags=("unitary",))

    def __repr__(self):
        return (f"UnitaryPath(dim={self.dim}, points={len(self)}, "
                f"t_max={self.grid[-1]:.6g}, tol={self.tol_achieved:.3e})")


def _cf4_step(schedule, t0: float, h: float) -> np.ndarray:
    """One commutator-free 4th-order step over [t0, t0+h] (exactly unitary)."""
    h1 = schedule.sample(t0 + _GAUSS_C1 * h)
    h2 = schedule.sample(t0 + _GAUSS_C2 * h)
    right = expm_igen(_CF4_A1 * h1 + _CF4_A2 * h2, h, check_hermitian=False)
    left = expm_igen(_CF4_A2 * h1 + _CF4_A1 * h2, h, check_hermitian=False)
    return left @ right


def _adaptive_step(schedule, t0, h, tol, depth=0):
    """Step-doubled CF4 over [t0, t0+h]: returns (transfer, error-estimate)."""
    coarse = _cf4_step(schedule, t0, h)
    fine = _cf4_step(schedule, t0 + 0.5 * h, 0.5 * h) @ _cf4_step(
        schedule, t0, 0.5 * h)
    err = frob(coarse - fine)
    if err <= tol:
        return fine, err
    if depth >= _MAX_SPLIT_DEPTH:
        raise ToleranceNotMet(
            f"local error {err:.3e} > tol {tol:.3e} at t={t0:.6g} after "
            f"{_MAX_SPLIT_DEPTH} interval splits (schedule too stiff or "
            f"grid too coarse)")
    tl, el = _adaptive_step(schedule, t0, 0.5 * h, tol, depth + 1)
    tr, er = _adaptive_step(schedule, t0 + 0.5 * h, 0.5 * h, tol, depth + 1)
    return tr @ tl, max(el, er)


def _resolve_store(grid: np.ndarray, store) -> np.ndarray:
    """Map requested store times onto integration-grid indices."""
    if store is None:
        return np.arange(grid.size)
    h = grid[1] - grid[0] if grid.size > 1 else 1.0
    idx = {0, grid.size - 1}
    for t in np.atleast_1d(np.asarray(store, dtype=float)):
        k = int(round(t / h)) if grid.size > 1 else 0
        if k < 0 or k >= grid.size or abs(grid[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"store time {t} is not on the integration grid")
        idx.add(k)
    return np.array(sorted(idx), dtype=int)


def evolve(schedule: HamiltonianSchedule, t_max: float, steps: int = None,
           tol: float = 1e-10, store=None) -> UnitaryPath:
    """Integrate ``i dU/dt = H(t) U`` from ``U(0) = 1`` up to ``t_max``.

    Parameters
    ----------
    schedule : HamiltonianSchedule
        The Hermitian generator.
    t_max : float
        Final time (> 0).
    steps : int, optional
        Number of grid intervals.  Defaults to 2048 per declared period
        (2048 total when no period is declared).
    tol : float
        Local-error budget per step, estimated by step-doubling; intervals
        that exceed it are split recursively.  Must be >= 1e-14.
    store : sequence of float, optional
        Times (on the integration grid) at which to keep ``U``; ``0`` and
        ``t_max`` are always kept.  Default: the whole grid.

    Returns
    -------
    UnitaryPath

    Raises
    ------
    ToleranceNotMet
        If an interval still exceeds ``tol`` after maximal splitting.
    """
    t_max = float(t_max)
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    if tol < linalg.TOL_FLOOR:
        raise ValueError(f"tol must be >= {linalg.TOL_FLOOR}")
    if steps is None:
        if schedule.period is not None:
            steps = DEFAULT_STEPS_PER_PERIOD * max(
                1, int(np.ceil(t_max / schedule.period - 1e-12)))
        else:
            steps = DEFAULT_STEPS_PER_PERIOD
    steps = int(steps)
    if steps < 1:
        raise ValueError("steps must be a positive integer")

    grid = np.linspace(0.0, t_max, steps + 1)
    keep = _resolve_store(grid, store)
    dim = schedule.dim

    if schedule.is_constant:
        w, v = schedule.base_eig()
        samples = np.empty((keep.size, dim, dim), dtype=complex)
        samples[0] = np.eye(dim)
        for row, k in enumerate(keep[1:], start=1):
            samples[row] = (v * np.exp(-1j * w * grid[k])) @ v.conj().T
        return UnitaryPath(grid[keep], samples, tol_achieved=0.0,
                           drift_max=0.0)

    samples = np.empty((keep.size, dim, dim), dtype=complex)
    samples[0] = np.eye(dim)
    keep_set = {int(k): row for row, k in enumerate(keep)}
    u = np.eye(dim, dtype=complex)
    eye = np.eye(dim)
    err_max = 0.0
    drift_max = 0.0
    h = grid[1] - grid[0]
    for k in range(steps):
        transfer, err = _adaptive_step(schedule, grid[k], h, tol)
        u = transfer @ u
        err_max = max(err_max, err)
        drift = frob(u @ u.conj().T - eye)
        drift_max = max(drift_max, drift)
        if drift > 1e-12:
            u = linalg.polar_unitary(u)
        row = keep_set.get(k + 1)
        if row is not None:
            samples[row] = u
    return UnitaryPath(grid[keep], samples, tol_achieved=err_max,
                       drift_max=drift_max)


def compose_geq(path: UnitaryPath, y: HamiltonianSchedule,
                invariant0=None, tol: float = 1e-10) -> UnitaryPath:
    """Compose ``U(t) -> U(t) V(t)`` with ``i dV/dt = Y(t) V(t)``.

    ``Y`` must commute with the initial invariant; this is revalidated on
    the stored grid when ``invariant0`` is supplied.

    Parameters
    ----------
    path : UnitaryPath
        Evolution operator of the base system, stored densely enough for
        the ``V`` integration (``V`` is integrated on ``path.grid``).
    y : HamiltonianSchedule
        Symmetry generator ``Y(t)`` in the initial frame.
    invariant0 : array_like, optional
        ``I(0)``; when given, ``comm_norm(Y(t), I(0)) <= 1e-8 ||Y(t)||_F``
        is enforced at every stored grid point.
    tol : float
        Local-error budget for the ``V`` integration.

    Returns
    -------
    UnitaryPath
        The composed path; bit-identical to ``path`` when ``Y`` is the zero
        schedule.

    Raises
    ------
    SymmetryViolation
        If the commutation precondition fails, reporting the offending time.
    """
    if y.dim != path.dim:
        raise DimensionMismatch(
            f"Y has dim {y.dim}, path has dim {path.dim}")
    grid = path.grid
    if invariant0 is not None:
        i0 = np.asarray(
            invariant0.array if isinstance(invariant0, OperatorMatrix)
            else invariant0, dtype=complex)
        for t in grid:
            yt = y.sample(t)
            bound = 1e-8 * max(frob(yt), 1e-300)
            defect = linalg.comm_norm(yt, i0)
            if defect > bound:
                raise SymmetryViolation(
                    f"[Y(t), I(0)] has norm {defect:.3e} > {bound:.3e} "
                    f"at grid point t={t:.9g}")

    # zero schedule -> exact identity transformation, bit-identical samples
    if all(not np.any(y.sample(t)) for t in grid[: min(3, grid.size)]) \
            and not np.any(y.sample(grid[-1])):
        return UnitaryPath(grid, path.samples,
                           tol_achieved=path.tol_achieved,
                           drift_max=path.drift_max)

    dim = path.dim
    v_samples = np.empty_like(path.samples)
    v_samples[0] = np.eye(dim)

    if y.is_constant:
        w, vec = y.base_eig()
        for k in range(1, grid.size):
            v_samples[k] = (vec * np.exp(-1j * w * grid[k])) @ vec.conj().T
        err_max = 0.0
    elif y.kind == "scalar_profile":
        # V(t) = exp(-i F(t) Y0): exact up to the quadrature of F
        from scipy.integrate import cumulative_simpson
        f_vals = np.array([float(y._profile(t)) for t in grid])
        f_cum = np.concatenate(
            ([0.0], cumulative_simpson(f_vals, x=grid)))
        w, vec = y.base_eig()
        for k in range(1, grid.size):
            v_samples[k] = (vec * np.exp(-1j * w * f_cum[k])) @ vec.conj().T
        err_max = 0.0
    else:
        v = np.eye(dim, dtype=complex)
        err_max = 0.0
        for k in range(grid.size - 1):
            h = grid[k + 1] - grid[k]
            transfer, err = _adaptive_step(y, grid[k], h, tol)
            v = transfer @ v
            err_max = max(err_max, err)
            v_samples[k + 1] = v

    out = np.einsum("kij,kjl->kil", path.samples, v_samples)
    out[0] = np.eye(dim)
    return UnitaryPath(grid, out,
                       tol_achieved=max(path.tol_achieved, err_max),
                       drift_max=path.drift_max)


def loop_check(path: UnitaryPath, t: float, tol: float = 1e-10):
    """Detect an evolution loop: is ``U(t)`` proportional to the identity?

    Returns the best-fit complex unit ``c = tr U(t)/dim`` (normalized) when
    ``||U(t) - c * identity||_F <= tol * dim``, otherwise ``None``.
    """
    u = path.at(t)
    dim = path.dim
    c = np.trace(u) / dim
    mag = abs(c)
    if mag < 1e-3:
        return None
    c = c / mag
    if frob(u - c * np.eye(dim)) <= tol * dim:
        return complex(c)
    return None
