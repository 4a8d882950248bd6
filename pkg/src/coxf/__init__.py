"""Straggler-resilient coded distributed linear transforms.

Construct banded and random coding matrices, encode block-partitioned
matrices, decode y = Ax from any sufficient subset of worker results via
hybrid peeling/rooting, verify the structural optimality claims with exact
integer-rank oracles, and run reproducible virtual-time experiments.
"""

from .analysis import (AuditRecord, EnumerationGuardError, McReport, SupportGraph,
                       find_deficient_subset, has_perfect_matching, load_statistics,
                       lower_bound_audit, probabilistic_threshold_estimate,
                       rank_matching_pair, recovery_threshold_exact, verify_resists)
from .blocks import (BlockPartition, DataMatrix, block_multiply, load_matrix,
                     load_vector, partition, partition_dims, save_matrix, save_vector)
from .codes import (DEFAULT_COEFF_SET_SIZE, CodeGenerationError, CodeSpec, CodingMatrix,
                    EmptySupportWarning, EncodedAssignment, build_code, computation_load,
                    encode, make_cross, make_one_diagonal, make_p_bernoulli,
                    make_s_diagonal, regenerate_until_valid)
from .decoder import (DecodeError, DecodeReport, ReceivedSet, diagonal_decode,
                      hybrid_decode, inverse_decode, rooting_vector)
from .exact import det_exact, invert_exact, rank_exact, solve_exact
from .seeding import derive_seed, rng_from, sample_without_replacement
from .simulator import (CompareConfig, ExperimentReport, GdTrace, InsufficientResultsError,
                        JobTrace, SchemeSpec, SimulationError, StragglerModel,
                        compare_schemes, run_coded_gd, run_transform, suggest_step_size)

__version__ = "0.1.0"
