"""Tensor-network initialization of parametrized quantum circuits.

Matrix product states trained classically (as Born machines or by DMRG) are
decomposed into layers of SU(4) gates and used as starting points for
CMA-ES circuit training.
"""

from .circuit import ParamCircuit, build_circuit, init_params, kak_decompose, simulate, su4_matrix
from .decompose import LayerStack, decompose_mps, extract_layer
from .errors import ConfigurationError, Tn2PqcError
from .experiments import ExperimentConfig, RunRecord, run_baseline, run_gradient_variance, run_synergy
from .ground_state import MPO, dmrg_ground_state, heisenberg_mpo
from .mps import MPS
from .optimizers import CmaesConfig, cmaes_minimize, finite_diff_gradient
from .tasks import Dataset, bas_dataset, cardinality_dataset, heisenberg_terms, kl_divergence
from .tnbm import TnbmConfig, train_tnbm

__version__ = "0.1.0"
