"""Ehrenfest propagation of a Wigner-sampled trajectory ensemble.

Each trajectory carries classical displacements/momenta and the
single-particle propagator ``U`` of the noninteracting electrons.  Both
spin channels share ``U``, so the many-electron state of a trajectory is
``U-hat |Psi(0)>`` exactly, and its one-body matrix is ``U gamma0 U^+``.
The ensemble-averaged density matrix is accumulated over the determinants
of the reference orbitals (the molecular orbitals of the relaxed chain);
reduced density matrices and purities follow from it.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional, Sequence

import numpy as np

from ..densmat import DensityMatrixExpansion, PureState
from ..fock import SlaterDeterminant
from ..purity import purity_trace
from ..rdm import build_rdm, rdm_map
from .ssh import (HBAR, SSHChain, SSHParameters, electronic_gradient, ground_state_hessian, hamiltonian,
                  lattice_energy, lattice_gradient)

ORTHONORMALITY_ATOL = 1e-9
ENERGY_DRIFT_WARN = 1e-4
HESSIAN_NEG_ATOL = 1e-8


class PropagationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LaserPulse:
    """``E(t) = envelope(t) cos(omega t)`` with a Gaussian turn-on that
    reaches ``amplitude`` at ``t_on`` and stays there."""

    photon_energy: float
    amplitude: float
    t_on: float = 300.0
    width: float = 100.0

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        rise = self.amplitude * np.exp(-0.5 * ((t - self.t_on) / self.width) ** 2)
        return np.where(t < self.t_on, rise, self.amplitude)

    def field(self, t):
        return self.envelope(t) * np.cos(self.photon_energy / HBAR * np.asarray(t, dtype=float))


@dataclass
class TrajectoryEnsemble:
    """Initial nuclear conditions, one row per trajectory."""

    chain: SSHChain
    u: np.ndarray
    p: np.ndarray
    frequencies: np.ndarray
    modes: np.ndarray
    seed: Optional[int] = None
    width_scale: float = 1.0

    @property
    def n_traj(self) -> int:
        return self.u.shape[0]


def normal_modes(chain: SSHChain) -> tuple[np.ndarray, np.ndarray]:
    """Angular frequencies (1/fs) and orthonormal mode vectors (columns).

    Zero modes (the free translation) come back with frequency 0.
    """
    H = ground_state_hessian(chain.params, chain.u)
    w, L = np.linalg.eigh(H)
    if w[0] < -HESSIAN_NEG_ATOL * max(1.0, abs(w[-1])):
        raise PropagationError(f"negative Hessian eigenvalue {w[0]:.3e}: geometry is not a minimum")
    w = np.where(w < 1e-6 * max(1.0, abs(w[-1])), 0.0, w)
    return np.sqrt(w / chain.params.mass), L


def sample_wigner(chain: SSHChain, n_traj: int, seed: Optional[int] = None,
                  width_scale: float = 1.0) -> TrajectoryEnsemble:
    """Harmonic ground-state Wigner sampling of every nonzero normal mode.

    Mode coordinate variance ``hbar / (2 M omega)``, momentum variance
    ``hbar M omega / 2``.  ``width_scale=0`` puts every trajectory at the
    minimum at rest.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be positive")
    omega, L = normal_modes(chain)
    M = chain.params.mass
    rng = np.random.default_rng(seed)
    active = omega > 0
    sig_q = np.zeros_like(omega)
    sig_p = np.zeros_like(omega)
    sig_q[active] = np.sqrt(HBAR / (2 * M * omega[active]))
    sig_p[active] = np.sqrt(HBAR * M * omega[active] / 2)
    q = rng.standard_normal((n_traj, omega.size)) * sig_q * width_scale
    pi = rng.standard_normal((n_traj, omega.size)) * sig_p * width_scale
    u = chain.u + q @ L.T
    p = pi @ L.T
    return TrajectoryEnsemble(chain, u, p, omega, L, seed, width_scale)


def _expm_herm(h: np.ndarray, dt: float) -> np.ndarray:
    """``exp(-i h dt / hbar)`` for a batch of real symmetric matrices."""
    w, Q = np.linalg.eigh(h)
    phase = np.exp(-1j * w * (dt / HBAR))
    return (Q * phase[..., None, :]) @ np.swapaxes(Q, -1, -2)


@dataclass
class EhrenfestState:
    t: float
    u: np.ndarray
    p: np.ndarray
    U: np.ndarray
    gamma: np.ndarray
    force: np.ndarray


class EhrenfestPropagator:
    """Velocity Verlet for the nuclei, mid-point exponential for electrons.

    ``gamma0`` is the total (both spins) one-body matrix in the site basis
    at ``t = 0``; all arrays carry a leading trajectory axis.
    """

    def __init__(self, params: SSHParameters, laser: Optional[LaserPulse] = None):
        self.params = params
        self.laser = laser

    def field(self, t: float) -> float:
        return 0.0 if self.laser is None else float(self.laser.field(t))

    def forces(self, u, gamma, t):
        E = self.field(t)
        return -(electronic_gradient(self.params, gamma, E) + lattice_gradient(self.params, u))

    def energy(self, state: EhrenfestState) -> np.ndarray:
        """Electronic + lattice + kinetic energy per trajectory (field-free)."""
        h = hamiltonian(self.params, state.u)
        e_el = np.real(np.einsum("tij,tji->t", h, state.gamma))
        kin = np.sum(state.p ** 2, axis=-1) / (2 * self.params.mass)
        return e_el + lattice_energy(self.params, state.u) + kin

    def initial(self, u0, p0, gamma0, t0: float = 0.0) -> EhrenfestState:
        u0 = np.atleast_2d(np.asarray(u0, dtype=float))
        p0 = np.atleast_2d(np.asarray(p0, dtype=float))
        gamma0 = np.asarray(gamma0, dtype=complex)
        if gamma0.ndim == 2:
            gamma0 = np.broadcast_to(gamma0, (u0.shape[0],) + gamma0.shape).copy()
        U = np.broadcast_to(np.eye(self.params.n_sites, dtype=complex), gamma0.shape).copy()
        return EhrenfestState(t0, u0.copy(), p0.copy(), U, gamma0, self.forces(u0, gamma0, t0))

    def step(self, s: EhrenfestState, gamma0: np.ndarray, dt: float) -> EhrenfestState:
        M = self.params.mass
        u_new = s.u + s.p / M * dt + 0.5 * s.force / M * dt * dt
        u_mid = 0.5 * (s.u + u_new)
        t_mid = s.t + 0.5 * dt
        h_mid = hamiltonian(self.params, u_mid, self.field(t_mid))
        U = _expm_herm(h_mid, dt) @ s.U
        gamma = U @ gamma0 @ np.conj(np.swapaxes(U, -1, -2))
        t_new = s.t + dt
        f_new = self.forces(u_new, gamma, t_new)
        p_new = s.p + 0.5 * (s.force + f_new) * dt
        return EhrenfestState(t_new, u_new, p_new, U, gamma, f_new)

    def run(self, u0, p0, gamma0, t_final: float, dt: float, output_every: Optional[float] = None,
            callback: Optional[Callable[[EhrenfestState], None]] = None) -> EhrenfestState:
        n_steps = int(round(t_final / dt))
        if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
            raise ValueError("t_final must be an integer multiple of dt")
        stride = n_steps if output_every is None else max(1, int(round(output_every / dt)))
        s = self.initial(u0, p0, gamma0)
        gamma0 = s.gamma
        if callback is not None:
            callback(s)
        for k in range(1, n_steps + 1):
            s = self.step(s, gamma0, dt)
            if k % stride == 0 and callback is not None:
                callback(s)
        return s


def one_body_density(state: PureState, orbitals: np.ndarray) -> np.ndarray:
    """Total one-body matrix in the site basis of a state over reference
    determinants (spin-orbitals: all up, then all down)."""
    n = orbitals.shape[0]
    rho = DensityMatrixExpansion(state.dets, np.outer(state.amplitudes, state.amplitudes.conj()))
    D = build_rdm(rho, 1).matrix()  # D[p, q] = <c+_p c_q>
    g_mo = (D[:n, :n] + D[n:, n:]).T
    return orbitals @ g_mo @ orbitals.T


class EnsembleAccumulator:
    """Projects every trajectory onto the reference determinants and builds
    ensemble-averaged density matrices, purities and bootstrap errors."""

    def __init__(self, state: PureState, orbitals: np.ndarray, n_traj: int,
                 n_bootstrap: int = 100, seed: Optional[int] = None, orders: Sequence[int] = (1, 2)):
        self.n = orbitals.shape[0]
        self.V = orbitals
        self.state = state
        self.orders = tuple(orders)
        K = 2 * self.n
        sectors = sorted({(_spin_occ(d, self.n)[0].__len__(), _spin_occ(d, self.n)[1].__len__())
                          for d in state.dets})
        targets = []
        for n_up, n_dn in sectors:
            for up in combinations(range(self.n), n_up):
                for dn in combinations(range(self.n), n_dn):
                    targets.append(SlaterDeterminant.from_occupied(up + tuple(self.n + i for i in dn), K))
        self.targets = tuple(sorted(targets, key=lambda d: tuple(d.occupied())))
        self.maps = {r: rdm_map(self.targets, r) for r in self.orders}
        self.n_bootstrap = n_bootstrap
        rng = np.random.default_rng(seed)
        if n_bootstrap > 0:
            idx = rng.integers(0, n_traj, size=(n_bootstrap, n_traj))
            self.weights = np.stack([np.bincount(row, minlength=n_traj) for row in idx]) / n_traj
        else:
            self.weights = np.zeros((0, n_traj))
        self.records = []

    def amplitudes(self, U: np.ndarray) -> np.ndarray:
        """Many-electron amplitudes over ``targets`` for each trajectory."""
        W = np.swapaxes(self.V, 0, 1) @ U @ self.V  # propagator in the reference orbitals
        psi = np.zeros((U.shape[0], len(self.targets)), dtype=complex)
        for c, det in zip(self.state.amplitudes, self.state.dets):
            up, dn = _spin_occ(det, self.n)
            for k, tgt in enumerate(self.targets):
                tu, td = _spin_occ(tgt, self.n)
                if len(tu) != len(up) or len(td) != len(dn):
                    continue
                a = _minor_det(W, tu, up) * _minor_det(W, td, dn)
                psi[:, k] += c * a
        return psi

    def record(self, t: float, U: np.ndarray):
        psi = self.amplitudes(U)
        n_traj = psi.shape[0]
        rho = np.einsum("ti,tj->ij", psi, psi.conj()) / n_traj
        rho = 0.5 * (rho + rho.conj().T)
        expansion = DensityMatrixExpansion(self.targets, rho, check=False)
        entry = {"t": t, "rho": rho}
        for r in self.orders:
            gamma = build_rdm(expansion, r)
            entry[f"G{r}"] = gamma.matrix()
            entry[f"P{r}"] = purity_trace(gamma)
            if self.n_bootstrap:
                entry[f"P{r}_stderr"] = self._bootstrap(psi, r)
        self.records.append(entry)

    def _bootstrap(self, psi: np.ndarray, r: int) -> float:
        S = self.maps[r]
        per_traj = (psi[:, :, None] * psi.conj()[:, None, :]).reshape(psi.shape[0], -1)
        d = (S @ per_traj.T).T  # per-trajectory r! Gamma, flattened
        D = self.weights @ d
        nT = int(round(np.sqrt(D.shape[1])))
        D = D.reshape(-1, nT, nT)
        P = np.real(np.einsum("bij,bji->b", D, D))
        return float(np.std(P, ddof=1))


def _spin_occ(det: SlaterDeterminant, n: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    occ = det.occupied()
    return tuple(i for i in occ if i < n), tuple(i - n for i in occ if i >= n)


def _minor_det(W: np.ndarray, rows, cols) -> np.ndarray:
    if len(rows) == 0:
        return np.ones(W.shape[0], dtype=complex)
    return np.linalg.det(W[:, list(rows)][:, :, list(cols)])


@dataclass
class SimulationResult:
    times: np.ndarray
    orbital_populations: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    P1_stderr: np.ndarray
    P2_stderr: np.ndarray
    orbital_labels: list
    determinants: tuple
    rho: np.ndarray = field(repr=False)
    rdm1: np.ndarray = field(repr=False)
    rdm2: np.ndarray = field(repr=False)
    energy_drift: float = 0.0
    max_orthonormality_error: float = 0.0

    def observations(self):
        from ..reconstruct import ObservationSeries
        return ObservationSeries(self.times, self.orbital_populations, self.P1, self.P2,
                                 int(round(self.orbital_populations[0].sum())))


def propagate(ensemble: TrajectoryEnsemble, initial: PureState, laser: Optional[LaserPulse] = None,
              t_final: float = 500.0, dt: float = 0.01, output_every: float = 1.0,
              n_bootstrap: int = 100, seed: Optional[int] = None,
              chunk_size: Optional[int] = None, threads: int = 1) -> SimulationResult:
    """Propagate every trajectory and return ensemble observables.

    ``initial`` is expanded over determinants of the reference orbitals of
    ``ensemble.chain`` (spin-orbitals: all up then all down).  Trajectories
    can be split into chunks of ``chunk_size`` to bound memory; results are
    identical because the chunk order is fixed, also when ``threads > 1``
    runs chunks concurrently.
    """
    chain = ensemble.chain
    params = chain.params
    n = params.n_sites
    if initial.dets[0].K != 2 * n:
        raise ValueError(f"initial state must live on {2 * n} spin-orbitals")
    if initial.dets[0].N != params.n_electrons:
        raise ValueError(f"initial state must have {params.n_electrons} electrons")
    _, V = chain.orbitals()
    gamma0 = one_body_density(initial, V)
    prop = EhrenfestPropagator(params, laser)
    n_traj = ensemble.n_traj
    chunk = n_traj if chunk_size is None else chunk_size
    acc = EnsembleAccumulator(initial, V, n_traj, n_bootstrap, seed)

    # propagators at the output times, chunk by chunk; chunks are merged in
    # their fixed order so the result does not depend on ``threads``
    def run_chunk(start: int):
        sl = slice(start, min(start + chunk, n_traj))
        out = {"U": [], "t": [], "drift": 0.0, "drift_t": 0.0, "ortho": 0.0}
        e0 = []

        def cb(s: EhrenfestState):
            err = float(np.max(np.abs(np.conj(np.swapaxes(s.U, -1, -2)) @ s.U - np.eye(n))))
            out["ortho"] = max(out["ortho"], err)
            if err > ORTHONORMALITY_ATOL:
                raise PropagationError(f"orbital orthonormality lost at t={s.t:.3f} fs (error {err:.2e})")
            if laser is None:
                e = prop.energy(s)
                if not e0:
                    e0.append(e)
                d = float(np.max(np.abs(e - e0[0])))
                if d > out["drift"]:
                    out["drift"], out["drift_t"] = d, s.t
            out["U"].append(s.U.copy())
            out["t"].append(s.t)

        prop.run(ensemble.u[sl], ensemble.p[sl], gamma0, t_final, dt, output_every, cb)
        return out

    starts = list(range(0, n_traj, chunk))
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run_chunk, starts))
    else:
        chunks = [run_chunk(s) for s in starts]
    times = chunks[0]["t"]
    worst = max(chunks, key=lambda c: c["drift"])
    drift = worst["drift"]
    ortho = max(c["ortho"] for c in chunks)
    if laser is None and drift > ENERGY_DRIFT_WARN:
        warnings.warn(f"energy drift {drift:.2e} eV at t={worst['drift_t']:.2f} fs exceeds "
                      f"{ENERGY_DRIFT_WARN:.0e} eV; reduce dt")
    snapshots = [c["U"] for c in chunks]

    for k, t in enumerate(times):
        U = np.concatenate([buf[k] for buf in snapshots], axis=0)
        acc.record(t, U)

    labels = [f"{p + 1}{s}" for s in ("u", "d") for p in range(n)]
    rec = acc.records
    G1 = np.array([e["G1"] for e in rec])
    return SimulationResult(
        times=np.array([e["t"] for e in rec]),
        orbital_populations=np.real(np.diagonal(G1, axis1=1, axis2=2)).copy(),
        P1=np.array([e["P1"] for e in rec]),
        P2=np.array([e["P2"] for e in rec]),
        P1_stderr=np.array([e.get("P1_stderr", np.nan) for e in rec]),
        P2_stderr=np.array([e.get("P2_stderr", np.nan) for e in rec]),
        orbital_labels=labels,
        determinants=acc.targets,
        rho=np.array([e["rho"] for e in rec]),
        rdm1=G1,
        rdm2=np.array([e["G2"] for e in rec]),
        energy_drift=drift,
        max_orthonormality_error=ortho,
    )
