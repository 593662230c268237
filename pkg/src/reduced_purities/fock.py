"""Spin-orbital bases, Slater determinants and fermionic operator strings.

Determinants are occupation bit-strings stored in a Python ``int`` (bit ``i``
is spin-orbital ``i``), so there is no upper limit on the basis size.  A
determinant is the ordered product of creators on the vacuum in ascending
index order, ``c+_{i1} c+_{i2} ... c+_{iN} |0>`` with ``i1 < i2 < ... < iN``.
With that convention a creator or annihilator acting on orbital ``k`` picks
up the sign ``(-1)**(number of occupied orbitals below k)``.

The text form of a determinant is a string of ``0``/``1`` characters where
character ``k`` is the occupation of spin-orbital ``k`` (``"11001100"``).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Iterator, Sequence

UP = "up"
DOWN = "down"
CREATE = "create"
ANNIHILATE = "annihilate"


class BasisMismatchError(ValueError):
    """Raised when an index or determinant does not belong to a basis."""


@dataclass(frozen=True)
class SpinOrbitalBasis:
    """Ordered list of ``(spatial_index, spin)`` labels.

    The position of a label in ``orbitals`` is its spin-orbital index and
    fixes the operator sign convention.
    """

    orbitals: tuple[tuple[int, str], ...]

    def __post_init__(self):
        if len(self.orbitals) == 0:
            raise ValueError("basis must contain at least one spin-orbital")
        if len(set(self.orbitals)) != len(self.orbitals):
            raise ValueError("spin-orbital labels must be unique")
        for spatial, spin in self.orbitals:
            if spin not in (UP, DOWN):
                raise ValueError(f"unknown spin label {spin!r}")
            if int(spatial) < 0:
                raise ValueError("spatial orbital index must be nonnegative")

    @classmethod
    def restricted(cls, n_spatial: int) -> "SpinOrbitalBasis":
        """All up-spin orbitals first, then all down-spin orbitals."""
        return cls(tuple((p, UP) for p in range(n_spatial))
                   + tuple((p, DOWN) for p in range(n_spatial)))

    @property
    def K(self) -> int:
        return len(self.orbitals)

    def index(self, spatial: int, spin: str) -> int:
        try:
            return self.orbitals.index((spatial, spin))
        except ValueError:
            raise BasisMismatchError(f"no spin-orbital ({spatial}, {spin}) in basis") from None

    def label(self, i: int) -> str:
        spatial, spin = self.orbitals[i]
        return f"{spatial + 1}{'u' if spin == UP else 'd'}"


@dataclass(frozen=True, order=True)
class SlaterDeterminant:
    """Occupation bit-string over a basis of ``K`` spin-orbitals."""

    bits: int
    K: int

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError("K must be positive")
        if self.bits < 0 or self.bits >> self.K:
            raise BasisMismatchError(f"occupation {self.bits:b} does not fit in K={self.K}")

    @classmethod
    def from_string(cls, occupation: str) -> "SlaterDeterminant":
        if not occupation or set(occupation) - {"0", "1"}:
            raise ValueError(f"occupation string must be 0/1 characters, got {occupation!r}")
        bits = sum(1 << k for k, ch in enumerate(occupation) if ch == "1")
        return cls(bits, len(occupation))

    @classmethod
    def from_occupied(cls, occupied: Iterable[int], K: int) -> "SlaterDeterminant":
        bits = 0
        for i in occupied:
            if not 0 <= i < K:
                raise BasisMismatchError(f"orbital {i} out of range for K={K}")
            if bits >> i & 1:
                raise ValueError(f"orbital {i} listed twice")
            bits |= 1 << i
        return cls(bits, K)

    @property
    def N(self) -> int:
        return self.bits.bit_count()

    def is_occupied(self, i: int) -> bool:
        return bool(self.bits >> i & 1)

    def occupied(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.K) if self.bits >> i & 1)

    def to_string(self) -> str:
        return "".join("1" if self.bits >> k & 1 else "0" for k in range(self.K))

    def __str__(self):
        return self.to_string()


@dataclass(frozen=True)
class OperatorString:
    """Product of creators/annihilators, written left to right.

    ``ops[-1]`` acts first.  ``OperatorString(((CREATE, 2), (ANNIHILATE, 1)))``
    is ``c+_2 c_1``.
    """

    ops: tuple[tuple[str, int], ...]

    def __post_init__(self):
        for action, i in self.ops:
            if action not in (CREATE, ANNIHILATE):
                raise ValueError(f"unknown action {action!r}")
            if i < 0:
                raise BasisMismatchError(f"negative orbital index {i}")

    @classmethod
    def normal_ordered(cls, creators: Sequence[int], annihilators: Sequence[int]) -> "OperatorString":
        """``c+_{i1} ... c+_{ir} c_{jr} ... c_{j1}`` for ``creators=(i1..ir)``,
        ``annihilators=(j1..jr)``."""
        return cls(tuple((CREATE, i) for i in creators)
                   + tuple((ANNIHILATE, j) for j in reversed(annihilators)))

    @classmethod
    def parse(cls, text: str) -> "OperatorString":
        """Parse ``"c+3 c2"`` style strings (0-based indices)."""
        ops = []
        for token in text.split():
            if token.startswith("c+"):
                ops.append((CREATE, int(token[2:])))
            elif token.startswith("c"):
                ops.append((ANNIHILATE, int(token[1:])))
            else:
                raise ValueError(f"cannot parse operator token {token!r}")
        return cls(tuple(ops))

    def dagger(self) -> "OperatorString":
        flip = {CREATE: ANNIHILATE, ANNIHILATE: CREATE}
        return OperatorString(tuple((flip[a], i) for a, i in reversed(self.ops)))


def _sign_below(bits: int, i: int) -> int:
    return -1 if (bits & ((1 << i) - 1)).bit_count() & 1 else 1


def apply_operator_string(op: OperatorString, det: SlaterDeterminant):
    """Apply ``op`` to ``det``.

    Returns ``(sign, new_det)`` or ``None`` when the result vanishes.
    """
    bits = det.bits
    sign = 1
    for action, i in reversed(op.ops):
        if i >= det.K:
            raise BasisMismatchError(f"orbital {i} out of range for K={det.K}")
        occupied = bits >> i & 1
        if action == CREATE:
            if occupied:
                return None
            sign *= _sign_below(bits, i)
            bits |= 1 << i
        else:
            if not occupied:
                return None
            sign *= _sign_below(bits, i)
            bits &= ~(1 << i)
    return sign, SlaterDeterminant(bits, det.K)


def matrix_element(bra: SlaterDeterminant, op: OperatorString, ket: SlaterDeterminant) -> int:
    """``<bra| op |ket>`` as -1, 0 or +1."""
    res = apply_operator_string(op, ket)
    if res is None or res[1].bits != bra.bits:
        return 0
    return res[0]


def distribution(det: SlaterDeterminant, eps: int) -> int:
    """Occupation (0 or 1) of spin-orbital ``eps`` in ``det``."""
    if not 0 <= eps < det.K:
        raise BasisMismatchError(f"orbital {eps} out of range for K={det.K}")
    return det.bits >> eps & 1


def _check_same_space(a: SlaterDeterminant, b: SlaterDeterminant):
    if a.K != b.K:
        raise BasisMismatchError(f"determinants over different bases (K={a.K} vs K={b.K})")
    if a.N != b.N:
        raise BasisMismatchError(f"determinants with different electron counts ({a.N} vs {b.N})")


def coherence_order(a: SlaterDeterminant, b: SlaterDeterminant) -> int:
    """Number of single-particle transitions separating ``a`` and ``b``."""
    _check_same_space(a, b)
    return a.N - (a.bits & b.bits).bit_count()


def transition(a: SlaterDeterminant, b: SlaterDeterminant) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Orbitals emptied and filled in going from ``a`` to ``b``."""
    _check_same_space(a, b)
    emptied = a.bits & ~b.bits
    filled = b.bits & ~a.bits
    return (tuple(i for i in range(a.K) if emptied >> i & 1),
            tuple(i for i in range(a.K) if filled >> i & 1))


def all_determinants(K: int, N: int) -> Iterator[SlaterDeterminant]:
    """Every N-electron determinant over K spin-orbitals, lexicographic in the
    occupied-index tuple."""
    for occ in combinations(range(K), N):
        yield SlaterDeterminant.from_occupied(occ, K)
