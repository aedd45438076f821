"""Controller provisioning for three-layer LEO/MEO satellite networks."""
from .constellation import ShellConfig, build_constellation, default_shells, propagate
from .env import ProvisioningEnv, Scenario, make_scenario, sample_scenario
from .estimators import (
    BruteForceProvisioner,
    GAKMeansProvisioner,
    GreedyProvisioner,
    PPOProvisioner,
    RandomSearchProvisioner,
)
from .netmodel import Allocation, EvalParams, EvalResult, evaluate
from .traffic import TrafficScenario, generate_traffic

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "BruteForceProvisioner",
    "EvalParams",
    "EvalResult",
    "GAKMeansProvisioner",
    "GreedyProvisioner",
    "PPOProvisioner",
    "ProvisioningEnv",
    "RandomSearchProvisioner",
    "Scenario",
    "ShellConfig",
    "TrafficScenario",
    "build_constellation",
    "default_shells",
    "evaluate",
    "generate_traffic",
    "make_scenario",
    "propagate",
    "sample_scenario",
]
