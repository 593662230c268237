"""Reduced purities: trace route, closed forms for P1 and P2, limiting values.

The closed forms hold when every coherent determinant pair reaches its own
set of reduced-density-matrix elements.  ``overlapping_transitions`` reports
pairs for which that fails (two coherences feeding the same element), in
which case the closed form misses their interference and only the trace
route is exact.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .densmat import DensityMatrixExpansion
from .fock import BasisMismatchError, coherence_order, transition
from .rdm import ReducedDensityMatrix, build_rdm

COHERENCE_ATOL = 1e-14


@dataclass(frozen=True)
class LimitLedger:
    """Limiting values of ``P_r`` for a set of populations and pair orders."""

    r: int
    N: int
    M: int
    max_value: float
    min_value_given_populations: float
    absolute_min: float
    fully_incoherent_value: float
    fully_coherent_value: float
    delta1: float
    delta2: float
    # r = 2 only: values for a pure second-order superposition and its
    # dephased counterpart
    second_order_coherent: Optional[float] = None
    second_order_incoherent: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, Fraction) else v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class PurityReport:
    r: int
    value: float
    population_term: float
    coherence_term: float
    limits: Optional[LimitLedger] = field(default=None)

    def to_dict(self) -> dict:
        d = {"r": self.r, "value": self.value, "population_term": self.population_term,
             "coherence_term": self.coherence_term}
        d["limits"] = self.limits.to_dict() if self.limits is not None else None
        return d


def purity_trace(gamma: ReducedDensityMatrix) -> float:
    """``sum over all index tuples of Gamma^{J}_{I} Gamma^{I}_{J}``.

    Each ascending pair ``(I, J)`` stands for ``(r!)^2`` tuple pairs of equal
    sign-squared weight, so this is ``Tr(D^2)`` with ``D = r! Gamma``.
    """
    D = gamma.matrix()
    return float(np.sum(D * D.T).real)


def order_matrix(rho: DensityMatrixExpansion) -> np.ndarray:
    M = rho.M
    s = np.zeros((M, M), dtype=int)
    for n, m in combinations(range(M), 2):
        s[n, m] = s[m, n] = coherence_order(rho.dets[n], rho.dets[m])
    return s


def _check_electron_count(rho: DensityMatrixExpansion):
    Ns = {d.N for d in rho.dets}
    if len(Ns) != 1:
        raise BasisMismatchError(f"mixed electron counts {sorted(Ns)}")


def p1_terms(pops, coh2, orders, N):
    """Population and coherence parts of P1.

    ``pops``: populations ``a_nn``; ``coh2[n][m]``: ``|a_nm|^2``;
    ``orders[n][m]``: ``s_nm``.  Works with floats or Fractions.
    """
    M = len(pops)
    pop = N - 2 * sum(pops[n] * pops[m] * orders[n][m] for n in range(M) for m in range(n))
    coh = 2 * sum(coh2[n][m] for n in range(M) for m in range(n) if orders[n][m] == 1)
    return pop, coh


def p2_terms(pops, coh2, orders, N):
    """Population and coherence parts of P2 (see :func:`p1_terms`)."""
    M = len(pops)
    pop = Fraction(N * (N - 1), 2) if isinstance(N, int) else N * (N - 1) / 2
    pop = pop - sum(pops[n] * pops[m] * orders[n][m] * (2 * N - orders[n][m] - 1)
                    for n in range(M) for m in range(n))
    coh = 0
    for n in range(M):
        for m in range(n):
            s = orders[n][m]
            if s == 1:
                coh += 2 * coh2[n][m] * (N - 1)
            elif s == 2:
                coh += 2 * coh2[n][m]
    return pop, coh


def _closed_form(rho, terms, r, with_limits):
    _check_electron_count(rho)
    a = rho.coeffs
    pops = a.diagonal().real.tolist()
    coh2 = (np.abs(a) ** 2).tolist()
    orders = order_matrix(rho).tolist()
    pop, coh = terms(pops, coh2, orders, rho.N)
    pop, coh = float(pop), float(coh)
    limits = limit_ledger(pops, orders, rho.N, r) if with_limits else None
    return PurityReport(r, pop + coh, pop, coh, limits)


def p1_closed_form(rho: DensityMatrixExpansion, with_limits: bool = True) -> PurityReport:
    """``P1 = N - 2 sum_{n>m} (a_nn a_mm s_nm - |a_nm|^2 delta(s_nm, 1))``."""
    return _closed_form(rho, p1_terms, 1, with_limits)


def p2_closed_form(rho: DensityMatrixExpansion, with_limits: bool = True) -> PurityReport:
    """``P2 = N(N-1)/2 - sum_{n>m} a_nn a_mm s_nm (2N - s_nm - 1)
    + sum_{n>m} 2|a_nm|^2 (delta(s_nm,1)(N-1) + delta(s_nm,2))``."""
    return _closed_form(rho, p2_terms, 2, with_limits)


def _sum_sq(pops):
    return sum(p * p for p in pops)


def limit_ledger(populations: Sequence, orders, N: int, r: int = 1) -> LimitLedger:
    """Limiting values of P1 (``r=1``) or P2 (``r=2``).

    Pass ``Fraction`` populations for exact rational results.
    """
    if r not in (1, 2):
        raise ValueError("limiting values are defined for r = 1 and r = 2")
    pops = list(populations)
    M = len(pops)
    total = sum(pops)
    if abs(float(total) - 1.0) > 1e-12:
        raise ValueError(f"populations sum to {float(total)!r}, expected 1")
    orders = [list(row) for row in orders]
    if len(orders) != M or any(len(row) != M for row in orders):
        raise ValueError("orders must be an M x M matrix")
    one = Fraction(1) if all(isinstance(p, (int, Fraction)) for p in pops) else 1.0
    zero = [[0] * M for _ in range(M)]
    full = [[pops[n] * pops[m] for m in range(M)] for n in range(M)]
    s2 = _sum_sq(pops)
    terms = p1_terms if r == 1 else p2_terms
    inc = sum(terms(pops, zero, orders, N))
    coh = sum(terms(pops, full, orders, N))
    if r == 1:
        return LimitLedger(
            r=1, N=N, M=M,
            max_value=N * one,
            min_value_given_populations=N - 1 + s2,
            absolute_min=N * one / M,
            fully_incoherent_value=inc,
            fully_coherent_value=coh,
            delta1=1 - one / M,
            delta2=0 * one,
        )
    top = one * N * (N - 1) / 2
    return LimitLedger(
        r=2, N=N, M=M,
        max_value=top,
        min_value_given_populations=top - (N - 1) * (1 - s2),
        absolute_min=top / M,
        fully_incoherent_value=inc,
        fully_coherent_value=coh,
        delta1=(N - 1) * (1 - one / M),
        delta2=1 - one / M,
        second_order_coherent=top - 2 * (N - 2) * (1 - s2),
        second_order_incoherent=top - (2 * N - 3) * (1 - s2),
    )


def carlson_keller_gap(rho: DensityMatrixExpansion, r: int) -> float:
    """``P_{N-r} - P_r``; zero for every pure state."""
    if not 1 <= r < rho.N:
        raise ValueError(f"r={r} must satisfy 1 <= r < N={rho.N}")
    return purity_trace(build_rdm(rho, rho.N - r)) - purity_trace(build_rdm(rho, r))


def _element_keys(rho, n, m, r):
    """RDM elements (as unordered creator/annihilator set pairs) that the
    coherence between determinants n and m feeds at order r."""
    emptied, filled = transition(rho.dets[n], rho.dets[m])
    s = len(emptied)
    if s > r or s == 0:
        return set()
    common = [i for i in rho.dets[n].occupied() if rho.dets[m].is_occupied(i)]
    keys = set()
    for spect in combinations(common, r - s):
        a = frozenset(emptied + spect)
        b = frozenset(filled + spect)
        keys.add(frozenset((a, b)))
    return keys


def overlapping_transitions(rho: DensityMatrixExpansion, r: int) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Pairs of coherences that feed a common r-body element.

    An empty list means the P1 (``r=1``) or P2 (``r=2``) closed form is exact.
    """
    keys = {}
    clashes = []
    a = rho.coeffs
    for n, m in combinations(range(rho.M), 2):
        if abs(a[n, m]) <= COHERENCE_ATOL:
            continue
        for key in _element_keys(rho, n, m, r):
            if key in keys:
                clashes.append((keys[key], (n, m)))
            else:
                keys[key] = (n, m)
    return clashes
