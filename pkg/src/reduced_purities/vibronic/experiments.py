"""Initial electronic states and ready-made runs on the four-site chain.

Spin-orbital order: orbitals ``e1..e4`` spin up, then ``e1..e4`` spin
down, so the neutral ground determinant is ``11001100``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..densmat import PureState
from ..fock import OperatorString, SlaterDeterminant, apply_operator_string
from .dynamics import LaserPulse, SimulationResult, propagate, sample_wigner
from .ssh import SSHChain, SSHParameters, relax_geometry

PRESETS = ("type1", "type2", "photoexcitation")
PHOTOEXCITATION_AMPLITUDE = 8.7e-3  # V/A
GROUND_WEIGHT = 0.75


def ground_determinant(n_sites: int = 4, n_electrons: int = 4) -> SlaterDeterminant:
    half = n_electrons // 2
    return SlaterDeterminant.from_occupied(list(range(half)) + [n_sites + i for i in range(half)], 2 * n_sites)


def _excite(det: SlaterDeterminant, creators, annihilators) -> SlaterDeterminant:
    sign, out = apply_operator_string(OperatorString.normal_ordered(creators, annihilators), det)
    return out


def ground_state(n_sites: int = 4, n_electrons: int = 4) -> PureState:
    return PureState((ground_determinant(n_sites, n_electrons),), np.array([1.0]))


def type1_state(n_sites: int = 4, n_electrons: int = 4, weight: float = GROUND_WEIGHT) -> PureState:
    """Ground determinant plus the spin-up HOMO -> LUMO single excitation."""
    g = ground_determinant(n_sites, n_electrons)
    homo = n_electrons // 2 - 1
    e = _excite(g, (homo + 1,), (homo,))
    return PureState((g, e), np.sqrt([weight, 1.0 - weight]))


def type2_state(n_sites: int = 4, n_electrons: int = 4, weight: float = GROUND_WEIGHT) -> PureState:
    """Ground determinant plus the HOMO -> LUMO double excitation (both spins)."""
    g = ground_determinant(n_sites, n_electrons)
    homo = n_electrons // 2 - 1
    e = _excite(g, (homo + 1, n_sites + homo + 1), (homo, n_sites + homo))
    return PureState((g, e), np.sqrt([weight, 1.0 - weight]))


@dataclass
class RunConfig:
    """Every parameter of a simulation run, with defaults."""

    preset: str = "type1"
    n_sites: int = 4
    n_electrons: int = 4
    t0: float = 2.5
    alpha: float = 4.1
    k_spring: float = 21.0
    mass: float = 1349.14
    lattice_spacing: float = 1.22
    compensate: bool = True
    n_traj: int = 1000
    seed: int = 1
    width_scale: float = 1.0
    t_final: float = 500.0
    dt: float = 0.01
    output_every: float = 1.0
    n_bootstrap: int = 100
    chunk_size: int = 250
    photon_energy: Optional[float] = None  # None: resonant with the relaxed HOMO-LUMO gap
    amplitude: float = PHOTOEXCITATION_AMPLITUDE
    t_on: float = 300.0
    width: Optional[float] = None  # None: t_on / 3
    weight: float = GROUND_WEIGHT

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")

    def params(self) -> SSHParameters:
        return SSHParameters(self.n_sites, self.n_electrons, self.t0, self.alpha, self.k_spring,
                             self.mass, self.lattice_spacing, self.compensate)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Run:
    config: RunConfig
    chain: SSHChain
    laser: Optional[LaserPulse]
    result: SimulationResult
    extra: dict = field(default_factory=dict)


def photoexcitation_laser(chain: SSHChain, photon_energy: Optional[float] = None,
                          amplitude: float = PHOTOEXCITATION_AMPLITUDE, t_on: float = 300.0,
                          width: Optional[float] = None) -> LaserPulse:
    hw = chain.homo_lumo_gap() if photon_energy is None else photon_energy
    return LaserPulse(hw, amplitude, t_on, t_on / 3.0 if width is None else width)


def photoexcitation_experiment(chain: SSHChain, laser: LaserPulse, ensemble, t_final: float = 500.0,
                               dt: float = 0.01, output_every: float = 1.0, n_bootstrap: int = 100,
                               seed: Optional[int] = None, chunk_size: Optional[int] = None,
                               threads: int = 1) -> SimulationResult:
    """Drive the ground state with ``laser`` and return the ensemble series."""
    p = chain.params
    return propagate(ensemble, ground_state(p.n_sites, p.n_electrons), laser, t_final, dt,
                     output_every, n_bootstrap, seed, chunk_size, threads)


def run_preset(config: RunConfig, threads: int = 1) -> Run:
    chain = relax_geometry(SSHChain(config.params()))
    ens = sample_wigner(chain, config.n_traj, config.seed, config.width_scale)
    n, ne = config.n_sites, config.n_electrons
    laser = None
    if config.preset == "type1":
        init = type1_state(n, ne, config.weight)
    elif config.preset == "type2":
        init = type2_state(n, ne, config.weight)
    else:
        laser = photoexcitation_laser(chain, config.photon_energy, config.amplitude, config.t_on, config.width)
        init = ground_state(n, ne)
    res = propagate(ens, init, laser, config.t_final, config.dt, config.output_every,
                    config.n_bootstrap, config.seed, config.chunk_size, threads)
    extra = {"homo_lumo_gap": chain.homo_lumo_gap(), "relaxed_u": chain.u.tolist(),
             "photon_energy": None if laser is None else laser.photon_energy}
    return Run(config, chain, laser, res, extra)
