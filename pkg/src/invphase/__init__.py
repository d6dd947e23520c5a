"""invphase: dynamical invariants, cyclic phases, and geometric-equivalence
transformations for finite-dimensional time-dependent quantum systems.

The package builds Lewis-Riesenfeld-style invariants for time-dependent
Hamiltonians, transports their eigenframes, splits cyclic phases into
dynamical and geometric parts (Abelian and non-Abelian), constructs
geometrically equivalent Hamiltonian families, and provides closed forms
for cranked Hamiltonians and a generalized harmonic oscillator in a
truncated Fock basis, all cross-validated against direct Schrodinger
integration.
"""

from . import (  # noqa: F401
    cranked,
    errors,
    invariant,
    linalg,
    oscillator,
    phases,
    propagator,
)

__version__ = "0.1.0"
