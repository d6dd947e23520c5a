"""Deterministic linear-algebra core for finite-dimensional quantum dynamics.

All operators live in a fixed orthonormal basis and are stored as dense
complex ``numpy`` arrays wrapped in :class:`OperatorMatrix`.  The module
provides exactly-unitary matrix exponentials of Hermitian generators, a
deterministic Hermitian eigensolver (ascending eigenvalues, canonical
eigenvector choice inside degenerate clusters), commutator norms, and a
handful of small helpers (Hermitization, polar re-unitarization) used by
the propagation and invariant layers.

Conventions
-----------
* hbar = 1 throughout.
* ``eigh`` returns eigenvalues ascending; within a degenerate cluster the
  eigenvectors are the Gram-Schmidt orthonormalization, in index order, of
  the projections of the standard basis vectors onto the cluster eigenspace,
  and every eigenvector's largest-magnitude component (lowest index on ties)
  is made real and positive.  Equal inputs therefore give bit-identical
  output.
* ``expm_igen(A, s)`` computes ``exp(-1j*s*A)`` for Hermitian ``A`` through
  its spectral decomposition, so the result is unitary to machine precision.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    NonHermitianInput,
)

__all__ = [
    "OperatorMatrix",
    "eigh",
    "expm_igen",
    "comm",
    "comm_norm",
    "frob",
    "hermitize",
    "polar_unitary",
    "TOL_FLOOR",
]

#: No tolerance parameter below this floor is accepted (requests tighter than
#: ~100x double-precision eps are meaningless for dense algebra).
TOL_FLOOR = 1e-14

#: Relative gap below which adjacent eigenvalues are treated as one cluster.
_CLUSTER_GAP = 1e-9


def _as_matrix(a) -> np.ndarray:
    """Coerce input to a square 2-D complex ndarray."""
    arr = np.asarray(a.array if isinstance(a, OperatorMatrix) else a,
                     dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(
            f"expected a square matrix, got shape {arr.shape}")
    return arr


def frob(a) -> float:
    """Frobenius norm of a matrix (or OperatorMatrix)."""
    return float(np.linalg.norm(_as_matrix(a)))


def hermitize(a) -> np.ndarray:
    """Return the Hermitian part (A + A^dagger)/2 of a matrix."""
    arr = _as_matrix(a)
    return 0.5 * (arr + arr.conj().T)


def herm_defect(a) -> float:
    """max |A - A^dagger| entrywise, the absolute hermiticity defect."""
    arr = _as_matrix(a)
    return float(np.max(np.abs(arr - arr.conj().T))) if arr.size else 0.0


class OperatorMatrix:
    """Immutable dense operator with validated structural flags.

    Parameters
    ----------
    array : array_like
        Square complex matrix.
    flags : iterable of str, optional
        Any of ``"hermitian"``, ``"unitary"``, ``"diagonal"``.  Each claimed
        flag is validated on construction:

        * hermitian : ``max|A - A^H| <= 1e-12 * max(1, max|A|)``
        * unitary   : ``||A^H A - 1||_F <= 1e-10 * dim``
        * diagonal  : all off-diagonal entries exactly zero

    Raises
    ------
    NonHermitianInput
        If ``"hermitian"`` is claimed but the bound fails.
    ValueError
        If another claimed flag fails validation or is unknown.
    """

    __slots__ = ("_array", "_flags")

    _KNOWN_FLAGS = frozenset({"hermitian", "unitary", "diagonal"})

    def __init__(self, array, flags=()):
        arr = _as_matrix(array)
        arr.setflags(write=False)
        flagset = frozenset(flags)
        unknown = flagset - self._KNOWN_FLAGS
        if unknown:
            raise ValueError(f"unknown OperatorMatrix flags: {sorted(unknown)}")
        if "hermitian" in flagset:
            scale = max(1.0, float(np.max(np.abs(arr))) if arr.size else 0.0)
            defect = herm_defect(arr)
            if defect > 1e-12 * scale:
                raise NonHermitianInput(
                    f"hermitian flag claimed but max|A - A^H| = {defect:.3e} "
                    f"> 1e-12 * {scale:.3e}")
        if "unitary" in flagset:
            gram = arr.conj().T @ arr
            defect = float(np.linalg.norm(gram - np.eye(arr.shape[0])))
            if defect > 1e-10 * arr.shape[0]:
                raise ValueError(
                    f"unitary flag claimed but ||A^H A - 1||_F = {defect:.3e}")
        if "diagonal" in flagset:
            off = arr - np.diag(np.diag(arr))
            if np.any(off != 0):
                raise ValueError(
                    "diagonal flag claimed but off-diagonal entries nonzero")
        self._array = arr
        self._flags = flagset

    @property
    def array(self) -> np.ndarray:
        """The underlying (read-only) complex ndarray."""
        return self._array

    @property
    def flags(self) -> frozenset:
        """Validated structural flags."""
        return self._flags

    @property
    def dim(self) -> int:
        """Matrix dimension."""
        return self._array.shape[0]

    def dagger(self) -> "OperatorMatrix":
        """Hermitian conjugate; hermitian/diagonal/unitary flags survive."""
        return OperatorMatrix(self._array.conj().T, self._flags)

    # -- minimal arithmetic (flags recomputed conservatively) ---------------

    def _coerced(self, other) -> np.ndarray:
        arr = _as_matrix(other)
        if arr.shape != self._array.shape:
            raise DimensionMismatch(
                f"shape {arr.shape} does not match {self._array.shape}")
        return arr

    def __add__(self, other):
        keep = self._flags & {"hermitian", "diagonal"}
        if isinstance(other, OperatorMatrix):
            keep &= other._flags
        else:
            keep = frozenset()
        return OperatorMatrix(self._array + self._coerced(other), keep)

    def __sub__(self, other):
        keep = self._flags & {"hermitian", "diagonal"}
        if isinstance(other, OperatorMatrix):
            keep &= other._flags
        else:
            keep = frozenset()
        return OperatorMatrix(self._array - self._coerced(other), keep)

    def __matmul__(self, other):
        keep = frozenset()
        if isinstance(other, OperatorMatrix):
            keep = (self._flags & other._flags) & {"unitary", "diagonal"}
        return OperatorMatrix(self._array @ self._coerced(other), keep)

    def __mul__(self, scalar):
        s = complex(scalar)
        keep = self._flags & {"diagonal"}
        if s.imag == 0.0:
            keep |= self._flags & {"hermitian"}
        return OperatorMatrix(self._array * s, keep)

    __rmul__ = __mul__

    def __neg__(self):
        return OperatorMatrix(-self._array, self._flags & {"hermitian",
                                                           "diagonal"})

    def __eq__(self, other):
        if not isinstance(other, OperatorMatrix):
            return NotImplemented
        return (self._array.shape == other._array.shape
                and bool(np.array_equal(self._array, other._array)))

    def __hash__(self):
        return hash((self._array.shape, self._array.tobytes()))

    def __repr__(self):
        return (f"OperatorMatrix(dim={self.dim}, "
                f"flags={sorted(self._flags)})")


def _canonical_cluster_basis(vecs: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of the column span of ``vecs``.

    Projects the standard basis vectors e_0, e_1, ... onto the span in index
    order, keeping each projection that is not (numerically) already inside
    the span of the kept ones, then Gram-Schmidt orthonormalizes.
    """
    dim, d = vecs.shape
    proj = vecs @ vecs.conj().T          # orthogonal projector onto the span
    basis = []
    for j in range(dim):
        if len(basis) == d:
            break
        w = proj[:, j].copy()            # projection of e_j
        for b in basis:
            w -= b * (b.conj() @ w)
        nrm = np.linalg.norm(w)
        if nrm > 1e-7:
            basis.append(w / nrm)
    if len(basis) != d:                  # pathological span; fall back
        basis = [vecs[:, k] for k in range(d)]
    return np.column_stack(basis)


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    """Make each column's largest-|.| component (lowest index on ties) real > 0."""
    out = vecs.copy()
    mags = np.abs(out)
    for j in range(out.shape[1]):
        col = mags[:, j]
        i = int(np.argmax(col + 0.0))    # argmax takes the first maximum
        piv = out[i, j]
        if piv != 0:
            out[:, j] *= np.abs(piv) / piv
    return out


def eigh(a, *, check_hermitian: bool = True):
    """Hermitian eigendecomposition with deterministic output.

    Parameters
    ----------
    a : array_like or OperatorMatrix
        Hermitian matrix.
    check_hermitian : bool
        If True (default), reject inputs whose hermiticity defect exceeds
        ``1e-12 * max(1, max|A|)``.

    Returns
    -------
    w : ndarray, shape (dim,)
        Eigenvalues in ascending order.
    v : ndarray, shape (dim, dim)
        Orthonormal eigenvectors as columns, canonicalized: inside each
        near-degenerate cluster (relative gap below 1e-9 of the Frobenius
        norm) the basis is the deterministic projection construction, and
        every column's largest-magnitude entry is made real positive.

    Raises
    ------
    NonHermitianInput
        If the hermiticity check fails.
    ConvergenceFailure
        If LAPACK does not converge.
    """
    arr = _as_matrix(a)
    if check_hermitian:
        scale = max(1.0, float(np.max(np.abs(arr))) if arr.size else 0.0)
        defect = herm_defect(arr)
        if defect > 1e-12 * scale:
            raise NonHermitianInput(
                f"eigh requires a Hermitian matrix; max|A - A^H| = "
                f"{defect:.3e} > 1e-12 * {scale:.3e}")
    h = hermitize(arr)
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"eigh failed to converge: {exc}") from exc

    # canonicalize within near-degenerate clusters
    gap_scale = max(float(np.linalg.norm(h)), 1.0)
    thresh = _CLUSTER_GAP * gap_scale
    n = w.size
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and (w[stop] - w[stop - 1]) < thresh:
            stop += 1
        if stop - start > 1:
            v[:, start:stop] = _canonical_cluster_basis(v[:, start:stop])
        start = stop
    v = _fix_phase(v)
    return w, v


def expm_igen(a, s: float = 1.0, *, check_hermitian: bool = True) -> np.ndarray:
    """Unitary exponential ``exp(-1j * s * A)`` of a Hermitian generator.

    Uses the spectral decomposition of ``A`` so the result is unitary to
    machine precision for any real ``s``.

    Parameters
    ----------
    a : array_like or OperatorMatrix
        Hermitian generator.
    s : float
        Real scale (e.g. a time step).

    Returns
    -------
    ndarray
        The unitary ``exp(-1j*s*A)``.
    """
    arr = _as_matrix(a)
    s = float(s)
    # fast path: exactly diagonal input
    if not np.any(arr - np.diag(np.diag(arr))):
        d = np.diag(arr)
        if check_hermitian and np.max(np.abs(d.imag), initial=0.0) > 1e-12 * max(
                1.0, float(np.max(np.abs(d))) if d.size else 0.0):
            raise NonHermitianInput("diagonal generator has complex diagonal")
        return np.diag(np.exp(-1j * s * d.real))
    w, v = eigh(arr, check_hermitian=check_hermitian)
    return (v * np.exp(-1j * s * w)) @ v.conj().T


def comm(a, b) -> np.ndarray:
    """Commutator [A, B] = AB - BA."""
    aa, bb = _as_matrix(a), _as_matrix(b)
    if aa.shape != bb.shape:
        raise DimensionMismatch(
            f"commutator operands differ in shape: {aa.shape} vs {bb.shape}")
    return aa @ bb - bb @ aa

def comm_norm(a, b) -> float:
    """Frobenius norm of the commutator [A, B]."""
    return float(np.linalg.norm(comm(a, b)))


def polar_unitary(a) -> np.ndarray:
    """Nearest unitary to ``a`` in Frobenius norm (polar factor via SVD)."""
    arr = _as_matrix(a)
    u, _, vh = np.linalg.svd(arr)
    return u @ vh
