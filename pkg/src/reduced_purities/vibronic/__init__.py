"""SSH chain with classical lattice, Ehrenfest ensemble dynamics."""

from .ssh import HBAR, SSHChain, SSHParameters, relax_geometry
from .dynamics import (EhrenfestPropagator, LaserPulse, PropagationError, SimulationResult,
                       TrajectoryEnsemble, propagate, sample_wigner)
from .experiments import (RunConfig, ground_state, photoexcitation_experiment, photoexcitation_laser,
                          run_preset, type1_state, type2_state)
