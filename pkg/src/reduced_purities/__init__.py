"""Reduced purities of many-electron density matrices.

Slater-determinant algebra, r-body reduced density matrices, one- and
two-body purities with their closed forms and limits, coherence-model
reconstruction from reduced data, and an SSH-chain vibronic simulator.
"""

__version__ = "0.1.0"

from .fock import (SlaterDeterminant, SpinOrbitalBasis, OperatorString, apply_operator_string,
                   coherence_order, distribution, matrix_element)
from .densmat import DensityMatrixExpansion, PureState, dephase, dephase_all, from_pure, rotate_basis
from .rdm import ReducedDensityMatrix, build_rdm, contract, eigenvalues
from .purity import (LimitLedger, PurityReport, carlson_keller_gap, limit_ledger,
                     p1_closed_form, p2_closed_form, purity_trace)
from .reconstruct import (CoherenceModel, ObservationSeries, discard, enumerate_candidates,
                          fit_populations, photoexcitation_models, purity_envelope)
