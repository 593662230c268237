"""Open Su-Schrieffer-Heeger chain with classical site displacements.

Units: eV, Angstrom, fs.  Masses are in eV fs^2 / A^2.

Single-particle Hamiltonian (per spin), hopping between neighbours::

    h[j, j+1] = -(t0 - alpha * (u[j+1] - u[j]))

plus, in a field ``E`` (V/A), the dipole term ``E * x_j`` on the diagonal
with ``x_j`` the site position measured from the chain centre.  The
lattice energy is

    (K/2) sum_j d_j^2 - F0 sum_j d_j,      d_j = u[j+1] - u[j]

The linear term keeps the open chain from collapsing: ``F0`` is set so
that the undimerized chain feels no net bond compression on average
(``F0 = 2 alpha <bond order>`` of the uniform half-filled chain).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

HBAR = 0.6582119569  # eV fs


class RelaxationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SSHParameters:
    n_sites: int = 4
    n_electrons: int = 4
    t0: float = 2.5
    alpha: float = 4.1
    k_spring: float = 21.0
    mass: float = 1349.14
    lattice_spacing: float = 1.22
    compensate: bool = True

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError("an SSH chain needs at least two sites")
        if not 0 < self.n_electrons <= 2 * self.n_sites:
            raise ValueError("electron count must be in 1..2*n_sites")
        if self.n_electrons % 2:
            raise ValueError("closed-shell ground state requires an even electron count")
        if self.k_spring <= 0 or self.mass <= 0:
            raise ValueError("spring constant and mass must be positive")

    @property
    def bond_force(self) -> float:
        """Compensating force ``F0`` of the linear lattice term."""
        if not self.compensate or self.alpha == 0:
            return 0.0
        h = hamiltonian(self, np.zeros(self.n_sites))
        _, vecs = np.linalg.eigh(h)
        occ = vecs[:, : self.n_electrons // 2]
        gamma = 2.0 * occ @ occ.T
        bonds = np.diagonal(gamma, offset=1)
        return 2.0 * self.alpha * float(bonds.mean())


def positions(params: SSHParameters) -> np.ndarray:
    """Equilibrium site positions along the chain, centred on zero."""
    return (np.arange(params.n_sites) - 0.5 * (params.n_sites - 1)) * params.lattice_spacing


def hopping_derivatives(params: SSHParameters) -> np.ndarray:
    """``dh[k] = d h / d u_k`` (the Hamiltonian is linear in ``u``)."""
    n = params.n_sites
    dh = np.zeros((n, n, n))
    for j in range(n - 1):
        # h[j, j+1] = -t0 + alpha * (u[j+1] - u[j])
        dh[j + 1, j, j + 1] = dh[j + 1, j + 1, j] = params.alpha
        dh[j, j, j + 1] = dh[j, j + 1, j] = -params.alpha
    return dh


def hamiltonian(params: SSHParameters, u: np.ndarray, field: float | np.ndarray = 0.0) -> np.ndarray:
    """Single-particle Hamiltonian; ``u`` may carry leading batch axes."""
    u = np.asarray(u, dtype=float)
    n = params.n_sites
    h = np.zeros(u.shape[:-1] + (n, n))
    hop = -(params.t0 - params.alpha * np.diff(u, axis=-1))
    idx = np.arange(n - 1)
    h[..., idx, idx + 1] = hop
    h[..., idx + 1, idx] = hop
    field = np.asarray(field, dtype=float)
    if np.any(field != 0):
        x = positions(params) + u
        h[..., np.arange(n), np.arange(n)] += field[..., None] * x
    return h


def lattice_energy(params: SSHParameters, u: np.ndarray) -> np.ndarray:
    d = np.diff(u, axis=-1)
    return 0.5 * params.k_spring * np.sum(d * d, axis=-1) - params.bond_force * np.sum(d, axis=-1)


def lattice_gradient(params: SSHParameters, u: np.ndarray) -> np.ndarray:
    d = np.diff(u, axis=-1)
    g_bond = params.k_spring * d - params.bond_force
    grad = np.zeros_like(u)
    grad[..., :-1] -= g_bond
    grad[..., 1:] += g_bond
    return grad


def electronic_gradient(params: SSHParameters, gamma: np.ndarray, field: float | np.ndarray = 0.0) -> np.ndarray:
    """``d Tr(h gamma) / d u_k`` for a total (both-spin) one-body matrix.

    The field term contributes ``E * gamma_kk``; the compensating ionic
    charge (+1 per site) contributes ``-E``.
    """
    gr = np.real(gamma)
    d = np.diagonal(gr, offset=1, axis1=-2, axis2=-1) + np.diagonal(gr, offset=-1, axis1=-2, axis2=-1)
    grad = np.zeros(gr.shape[:-1])
    grad[..., :-1] -= params.alpha * d
    grad[..., 1:] += params.alpha * d
    field = np.asarray(field, dtype=float)
    if np.any(field != 0):
        grad += field[..., None] * (np.diagonal(gr, axis1=-2, axis2=-1) - 1.0)
    return grad


def ground_state_density(params: SSHParameters, u: np.ndarray) -> np.ndarray:
    """Total one-body matrix of the closed-shell ground determinant."""
    _, vecs = np.linalg.eigh(hamiltonian(params, u))
    occ = vecs[..., : params.n_electrons // 2]
    return 2.0 * occ @ np.swapaxes(occ, -1, -2)


def ground_state_energy(params: SSHParameters, u: np.ndarray) -> float:
    eps = np.linalg.eigvalsh(hamiltonian(params, u))
    return float(2.0 * eps[: params.n_electrons // 2].sum() + lattice_energy(params, u))


def ground_state_gradient(params: SSHParameters, u: np.ndarray) -> np.ndarray:
    return electronic_gradient(params, ground_state_density(params, u)) + lattice_gradient(params, u)


def ground_state_hessian(params: SSHParameters, u: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference Hessian of the adiabatic ground-state energy."""
    n = params.n_sites
    H = np.zeros((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        H[:, k] = (ground_state_gradient(params, u + e) - ground_state_gradient(params, u - e)) / (2 * step)
    return 0.5 * (H + H.T)


@dataclass(frozen=True)
class SSHChain:
    params: SSHParameters = field(default_factory=SSHParameters)
    u: Optional[np.ndarray] = None

    def __post_init__(self):
        u = np.zeros(self.params.n_sites) if self.u is None else np.array(self.u, dtype=float)
        if u.shape != (self.params.n_sites,):
            raise ValueError("one displacement per site is required")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    def hamiltonian(self, field: float = 0.0) -> np.ndarray:
        return hamiltonian(self.params, self.u, field)

    def orbitals(self) -> tuple[np.ndarray, np.ndarray]:
        """Orbital energies (ascending) and real orbitals as columns."""
        eps, vecs = np.linalg.eigh(self.hamiltonian())
        # fix the arbitrary sign: largest-magnitude component positive
        pivot = np.argmax(np.abs(vecs), axis=0)
        vecs = vecs * np.sign(vecs[pivot, np.arange(vecs.shape[1])])
        return eps, vecs

    def homo_lumo_gap(self) -> float:
        eps, _ = self.orbitals()
        homo = self.params.n_electrons // 2 - 1
        return float(eps[homo + 1] - eps[homo])

    def bond_lengths(self) -> np.ndarray:
        return self.params.lattice_spacing + np.diff(self.u)

    def energy(self) -> float:
        return ground_state_energy(self.params, self.u)

    def gradient(self) -> np.ndarray:
        return ground_state_gradient(self.params, self.u)


def relax_geometry(chain: SSHChain, gtol: float = 1e-8, max_iter: int = 200) -> SSHChain:
    """Minimize the ground-state energy (electronic + lattice) over the
    displacements.  The free translation is fixed by centring ``u``.

    Damped Newton iterations with a pseudo-inverse Hessian; raises
    :class:`RelaxationError` if the gradient norm stays above ``gtol``.
    """
    params = chain.params
    u = np.array(chain.u, dtype=float)
    u -= u.mean()
    g = ground_state_gradient(params, u)
    for _ in range(max_iter):
        gnorm = float(np.linalg.norm(g))
        if gnorm < gtol:
            return SSHChain(params, u)
        H = ground_state_hessian(params, u)
        w, Q = np.linalg.eigh(H)
        # step along positive-curvature modes, steepest descent elsewhere
        inv = np.where(w > 1e-8, 1.0 / np.maximum(w, 1e-8), 1.0 / params.k_spring)
        inv[np.abs(w) <= 1e-8] = 0.0
        step = -(Q * inv) @ Q.T @ g
        e0 = ground_state_energy(params, u)
        lam = 1.0
        while lam > 1e-6:
            trial = u + lam * step
            trial -= trial.mean()
            if ground_state_energy(params, trial) <= e0 + 1e-14:
                break
            lam *= 0.5
        u = trial
        g = ground_state_gradient(params, u)
    raise RelaxationError(f"geometry relaxation did not converge; gradient norm {np.linalg.norm(g):.3e}")


def with_parameters(chain: SSHChain, **changes) -> SSHChain:
    return SSHChain(replace(chain.params, **changes), chain.u)
