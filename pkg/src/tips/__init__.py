"""Endpoint-conditioned transition probabilities for CTMCs on large state spaces."""

__version__ = "0.1.0"

from .core import (BirthDeathModel, CtmcModel, DegenerateWeightsWarning, EstimateSummary,
                   FiniteCtmc, JumpChainPath, StepCapExceeded, TargetSet, TimedTrajectory,
                   abs_distance, forward_sampling_estimate, forward_simulate, indicator_distance,
                   jump_chain_probability, two_state_model)
from .integration import (build_auxiliary_matrix, hypoexponential_band_oracle, matrix_exponential,
                          timing_probability)
from .proposal import (GuidedProposal, Potential, PotentialError, ProposalConfig, ProposedPath,
                       decreasing_set, propose, propose_hitting_path, proposal_transition,
                       validate_potential)
from .estimator import (Particle, estimate_comparison_sweep, tips_estimate, weight_of_path)
from .gimh import (ExponentialPrior, chain_diagnostics, estimate_log_marginal, gimh_chain,
                   multiplicative_proposal)
from .smc import (ObservationSequence, WeightCollapse, set_potential, smc_run, systematic_resample)
from .oracle import (OracleUnavailable, enumerate_reachable, exact_transition_probability,
                     grid_posterior)
from .strings import StringModel, StringModelParams
from .rna import RnaModel, RnaModelParams
