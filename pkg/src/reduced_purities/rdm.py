"""r-body reduced density matrices built by direct operator-string evaluation.

Elements follow

    Gamma^{j1..jr}_{i1..ir} = (1/r!) Tr{ c+_{i1}..c+_{ir} c_{jr}..c_{j1} rho }

and are stored only for ascending tuples ``i1 < .. < ir`` (lower, creators)
and ``j1 < .. < jr`` (upper, annihilators).  Composite indices are the
ascending tuples in lexicographic order.  ``r! * elements`` is the Hermitian
matrix whose eigenvalues are the occupation numbers of the r-body density
matrix: its trace is ``C(N, r)`` and the trace of its square is ``P_r``.
"""

from __future__ import annotations

from collections import defaultdict
from functools import lru_cache
from itertools import combinations, permutations
from math import comb, factorial

import numpy as np
from scipy import sparse

from .densmat import DensityMatrixExpansion
from .fock import OperatorString, SlaterDeterminant, apply_operator_string

HERMITIAN_ATOL = 1e-12


class RDMError(ValueError):
    pass


def ascending_tuples(K: int, r: int) -> list[tuple[int, ...]]:
    return list(combinations(range(K), r))


def _perm_sign(seq) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


class ReducedDensityMatrix:
    """Antisymmetric r-body reduced density matrix over ascending tuples."""

    def __init__(self, r: int, K: int, N: int, elements: np.ndarray):
        self.r = r
        self.K = K
        self.N = N
        self.tuples = ascending_tuples(K, r)
        self._index = {t: k for k, t in enumerate(self.tuples)}
        elements = np.array(elements, dtype=complex)
        if elements.shape != (len(self.tuples),) * 2:
            raise RDMError(f"expected a {len(self.tuples)}x{len(self.tuples)} element block")
        elements.setflags(write=False)
        self.elements = elements

    def matrix(self) -> np.ndarray:
        """``r! * Gamma`` over ascending composite indices (rows: creators)."""
        return factorial(self.r) * self.elements

    def element(self, creators, annihilators) -> complex:
        """``Gamma^{annihilators}_{creators}`` for arbitrary index order."""
        creators, annihilators = tuple(creators), tuple(annihilators)
        if len(set(creators)) < self.r or len(set(annihilators)) < self.r:
            return 0.0
        i = self._index[tuple(sorted(creators))]
        j = self._index[tuple(sorted(annihilators))]
        return _perm_sign(creators) * _perm_sign(annihilators) * self.elements[i, j]

    def tensor(self) -> np.ndarray:
        """Full antisymmetric tensor ``T[i1..ir, j1..jr]`` (shape ``K**(2r)``)."""
        K, r = self.K, self.r
        T = np.zeros((K,) * (2 * r), dtype=complex)
        perms = [(p, _perm_sign(p)) for p in permutations(range(r))]
        for a, I in enumerate(self.tuples):
            for b, J in enumerate(self.tuples):
                v = self.elements[a, b]
                if v == 0:
                    continue
                for p, sp in perms:
                    Ip = tuple(I[k] for k in p)
                    for q, sq in perms:
                        T[Ip + tuple(J[k] for k in q)] = sp * sq * v
        return T

    def trace(self) -> float:
        return float(np.trace(self.matrix()).real)

    def __repr__(self):
        return f"ReducedDensityMatrix(r={self.r}, K={self.K}, N={self.N})"


@lru_cache(maxsize=64)
def _plan(det_bits: tuple[int, ...], K: int, r: int) -> sparse.csr_matrix:
    """Sparse map from ``vec(a)`` (row-major ``a[n, m]``) to ``vec(r! Gamma)``.

    ``<Phi_m| c+_I c_J |Phi_n> = s_I(m) s_J(n)`` whenever ``c_J|Phi_n>`` and
    ``c_I|Phi_m>`` reach the same (N-r)-electron remainder; everything else
    vanishes.  Grouping the annihilation results by remainder enumerates
    exactly the nonzero operator-string matrix elements.
    """
    tuples = ascending_tuples(K, r)
    index = {t: k for k, t in enumerate(tuples)}
    M = len(det_bits)
    groups = defaultdict(list)
    for n, bits in enumerate(det_bits):
        det = SlaterDeterminant(bits, K)
        for J in combinations(det.occupied(), r):
            res = apply_operator_string(OperatorString.normal_ordered((), J), det)
            sign, remainder = res
            groups[remainder.bits].append((n, index[J], sign))
    rows, cols, vals = [], [], []
    nT = len(tuples)
    for entries in groups.values():
        for m, I, sI in entries:
            for n, J, sJ in entries:
                rows.append(I * nT + J)
                cols.append(n * M + m)
                vals.append(sI * sJ)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(nT * nT, M * M))


def rdm_map(dets, r: int) -> sparse.csr_matrix:
    """Linear map taking flattened coefficients to flattened ``r! Gamma``."""
    dets = tuple(dets)
    return _plan(tuple(d.bits for d in dets), dets[0].K, r)


def build_rdm(rho: DensityMatrixExpansion, r: int) -> ReducedDensityMatrix:
    """r-body reduced density matrix of ``rho``; ``1 <= r <= N``."""
    if not 1 <= r <= rho.N:
        raise RDMError(f"order r={r} outside 1..N={rho.N}")
    S = rdm_map(rho.dets, r)
    nT = comb(rho.K, r)
    D = (S @ rho.coeffs.reshape(-1)).reshape(nT, nT)
    return ReducedDensityMatrix(r, rho.K, rho.N, D / factorial(r))


def contract(gamma: ReducedDensityMatrix) -> ReducedDensityMatrix:
    """Contract the last upper/lower index pair of an (r+1)-body matrix and
    rescale by ``(r+1)/(N-r)`` to obtain the r-body matrix."""
    r = gamma.r - 1
    if r < 1:
        raise RDMError("cannot contract a one-body matrix further")
    if gamma.N == r:
        raise RDMError("N == r: contraction prefactor (N - r) vanishes")
    lower = ascending_tuples(gamma.K, r)
    out = np.zeros((len(lower), len(lower)), dtype=complex)
    for a, I in enumerate(lower):
        for b, J in enumerate(lower):
            total = 0.0
            for k in range(gamma.K):
                if k in I or k in J:
                    continue
                total += gamma.element(I + (k,), J + (k,))
            out[a, b] = total
    return ReducedDensityMatrix(r, gamma.K, gamma.N, out * (r + 1) / (gamma.N - r))


def eigenvalues(gamma: ReducedDensityMatrix) -> np.ndarray:
    """Occupation numbers of the r-body matrix, descending."""
    D = gamma.matrix()
    if not np.allclose(D, D.conj().T, rtol=0, atol=HERMITIAN_ATOL * factorial(gamma.r)):
        raise RDMError("reduced density matrix is not Hermitian")
    return np.linalg.eigvalsh(0.5 * (D + D.conj().T))[::-1]
