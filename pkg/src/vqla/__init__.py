"""vqla: variational ground-state solvers for linear algebra tasks.

Matrix-vector multiplication and linear systems are posed as zero-energy
ground states of purpose-built Hamiltonians and solved by optimizing a
parameterized circuit on a dense statevector simulator, with circuit-faithful
overlap estimation, solution verification, continuation over an interpolated
matrix family, and a reproducible benchmark harness.
"""

from .pauli import (
    LcuSampler,
    PauliSum,
    PauliTerm,
    SparseMatrix,
    build_sampler,
    canonicalize,
    decompose_elementwise,
    one_norm,
    pauli_sum,
    pauli_to_matrix,
    sample_term,
)
from .statevec import (
    Circuit,
    Gate,
    StateVector,
    apply_gate,
    apply_pauli_sum,
    build_hardware_ansatz,
    derivative_state,
    fidelity,
    inner_product,
    prepare_state,
)
from .problems import Problem, interpolate_problem, make_problem
from .estimator import (
    EnergyReport,
    EstimatorConfig,
    energy_multiply,
    energy_solve,
    grad_analytic_multiply,
    grad_analytic_solve,
    grad_fd,
    hadamard_test,
    transition_amplitude,
)
from .verify import (
    VerificationReport,
    fidelity_bound_solve,
    fidelity_multiply,
    residual_ratio,
    verify_solution,
)
from .optimize import (
    AnsatzInsufficientError,
    MorphSchedule,
    OptimizerConfig,
    OptTrace,
    adaptive_depth_solve,
    ite_step,
    morph_run,
    vqe_run,
)
from .dynamics import (
    EvolutionSpec,
    TrajectoryRecord,
    imag_time_evolve,
    quantum_jump_apply,
    real_time_evolve,
    trajectory_run,
)
from .bench import (
    ExperimentResult,
    condition_number,
    random_problem,
    success_experiment,
    timing_experiment,
)
from .report import SolveReport, json_dumps

__version__ = "0.1.0"
