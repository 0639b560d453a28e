"""Tabular safe policy improvement with tighter sample-size thresholds."""
from .bounds import BoundParams, BetaPrior, all_nmin, convert_nmin, nmin_2s, nmin_beta, nmin_spi, nmin_spibb
from .data import (
    BootstrapSet,
    TransitionCounts,
    Trajectory,
    bootstrap_set,
    build_mle_mdp,
    build_mle_two_successor,
    count,
    sample_steps,
    sample_trajectories,
    transform_dataset,
)
from .environments import EnvSpec, behavior_perturbed_optimal, behavior_softmax_q, build_env, load_env_spec
from .errors import TightSpiError
from .estimators import SPIBBEstimator, TwoSuccessorCounter
from .mdp import StochasticPolicy, TabularMdp, evaluate_policy, greedy_policy, value_iteration
from .spibb import SpibbProblem, basic_rl_policy, spibb_policy
from .two_successor import TwoSuccessorMdp, transform_mdp, verify_preservation

__version__ = "0.1.0"
