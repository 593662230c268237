"""N-electron density matrices expanded over Slater determinants."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fock import BasisMismatchError, SlaterDeterminant, all_determinants

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-12
PSD_ATOL = 1e-10
NORM_ATOL = 1e-12


class ValidationError(ValueError):
    """Raised when a density matrix or state violates its invariants."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def _check_dets(dets: Sequence[SlaterDeterminant]):
    if len(dets) == 0:
        raise ValidationError("at least one determinant is required")
    K, N = dets[0].K, dets[0].N
    for d in dets:
        if d.K != K:
            raise BasisMismatchError("all determinants must share the basis size K")
        if d.N != N:
            raise ValidationError("all determinants must have the same electron count")


def _merge_duplicates(dets, coeffs):
    unique: dict[int, int] = {}
    order = []
    for d in dets:
        if d.bits not in unique:
            unique[d.bits] = len(order)
            order.append(d)
    if len(order) == len(dets):
        return list(dets), coeffs
    P = np.zeros((len(order), len(dets)))
    for n, d in enumerate(dets):
        P[unique[d.bits], n] = 1.0
    return order, P @ coeffs @ P.T


class DensityMatrixExpansion:
    """``rho = sum_nm a_nm |Phi_n><Phi_m|`` over a determinant list.

    Duplicate determinants are merged at construction.  The coefficient
    matrix is checked for Hermiticity, unit trace and positive
    semidefiniteness.
    """

    def __init__(self, dets: Sequence[SlaterDeterminant], coeffs, *, check: bool = True):
        dets = list(dets)
        _check_dets(dets)
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (len(dets), len(dets)):
            raise ValidationError(
                f"coefficient matrix shape {coeffs.shape} does not match {len(dets)} determinants")
        dets, coeffs = _merge_duplicates(dets, coeffs)
        self.dets: tuple[SlaterDeterminant, ...] = tuple(dets)
        self.coeffs = _frozen(coeffs)
        if check:
            self.validate()

    def validate(self):
        a = self.coeffs
        if not np.allclose(a, a.conj().T, rtol=0, atol=HERMITIAN_ATOL):
            raise ValidationError("coefficient matrix is not Hermitian")
        tr = np.trace(a).real
        if abs(tr - 1.0) > TRACE_ATOL:
            raise ValidationError(f"trace is {tr!r}, expected 1")
        lam = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
        if lam[0] < -PSD_ATOL:
            raise ValidationError(f"coefficient matrix is not positive semidefinite (min eigenvalue {lam[0]:.3e})")

    @property
    def N(self) -> int:
        return self.dets[0].N

    @property
    def K(self) -> int:
        return self.dets[0].K

    @property
    def M(self) -> int:
        return len(self.dets)

    @property
    def populations(self) -> np.ndarray:
        return self.coeffs.diagonal().real.copy()

    def __repr__(self):
        return f"DensityMatrixExpansion(M={self.M}, N={self.N}, K={self.K})"


@dataclass(frozen=True)
class PureState:
    """Normalized superposition ``sum_n c_n |Phi_n>``."""

    dets: tuple[SlaterDeterminant, ...]
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "dets", tuple(self.dets))
        _check_dets(self.dets)
        c = _frozen(self.amplitudes)
        if c.shape != (len(self.dets),):
            raise ValidationError("one amplitude per determinant is required")
        norm = np.vdot(c, c).real
        if abs(norm - 1.0) > NORM_ATOL:
            raise ValidationError(f"state norm is {norm!r}, expected 1")
        object.__setattr__(self, "amplitudes", c)


def from_pure(state: PureState) -> DensityMatrixExpansion:
    c = state.amplitudes
    return DensityMatrixExpansion(state.dets, np.outer(c, c.conj()))


def nbody_purity(rho: DensityMatrixExpansion) -> float:
    """``Tr(rho^2) = sum_nm |a_nm|^2``."""
    return float(np.sum(np.abs(rho.coeffs) ** 2))


def dephase(rho: DensityMatrixExpansion, predicate: Callable[[int, int], bool]) -> DensityMatrixExpansion:
    """Zero the coherences ``a_nm`` (and ``a_mn``) for which ``predicate(n, m)``
    holds, ``n != m``.  Populations are left untouched."""
    a = np.array(rho.coeffs)
    for n in range(rho.M):
        for m in range(n + 1, rho.M):
            if predicate(n, m) or predicate(m, n):
                a[n, m] = a[m, n] = 0.0
    out = DensityMatrixExpansion(rho.dets, a, check=False)
    # masks that are not block-diagonal can break positivity
    out.validate()
    return out


def dephase_all(rho: DensityMatrixExpansion) -> DensityMatrixExpansion:
    return dephase(rho, lambda n, m: True)


def rotate_basis(rho: DensityMatrixExpansion, V: np.ndarray) -> DensityMatrixExpansion:
    """Re-expand ``rho`` in the rotated spin-orbital basis.

    Old creators map to new ones as ``c+_i = sum_p V[p, i] c~+_p``, so a
    determinant with occupied set ``S`` becomes
    ``sum_P det(V[P, S]) |Phi~_P>`` over all N-subsets ``P``.  The result
    is expressed over every determinant of the new basis.
    """
    V = np.asarray(V, dtype=complex)
    K, N = rho.K, rho.N
    if V.shape != (K, K):
        raise BasisMismatchError(f"rotation must be {K}x{K}")
    targets = list(all_determinants(K, N))
    rows = np.array([t.occupied() for t in targets])
    C = np.empty((len(targets), rho.M), dtype=complex)
    for n, d in enumerate(rho.dets):
        cols = list(d.occupied())
        C[:, n] = np.linalg.det(V[rows][:, :, cols])
    a = C @ rho.coeffs @ C.conj().T
    return DensityMatrixExpansion(targets, 0.5 * (a + a.conj().T), check=False)
