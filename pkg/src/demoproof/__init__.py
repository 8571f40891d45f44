"""demoproof: strategy synthesis from demonstrations, verified by model checking.

The package covers the full pipeline for gridworld planning under partial
observability: building the POMDP for a scenario, collecting demonstration
data (scripted or live), cloning an observation-based randomized strategy,
checking reach-avoid and expected-cost requirements on the induced Markov
chain, and refining the strategy at counterexample states.
"""

from demoproof.models import (
    Distribution,
    Mc,
    Mdp,
    ObservationStrategy,
    Pomdp,
    Spec,
    induce_mc,
    observation_prior,
    validate,
)
from demoproof.gridworld import GridState, ObsVector, ScenarioConfig, ScenarioModel, build_pomdp
from demoproof.training import TrainingSet, Trajectory, hoeffding_min_samples
from demoproof.verify import CheckResult, check_spec, mdp_max_reach, reach_avoid_prob

__version__ = "0.1.0"

__all__ = [
    "Distribution",
    "Mdp",
    "Mc",
    "Pomdp",
    "ObservationStrategy",
    "Spec",
    "induce_mc",
    "observation_prior",
    "validate",
    "ScenarioConfig",
    "GridState",
    "ObsVector",
    "ScenarioModel",
    "build_pomdp",
    "TrainingSet",
    "Trajectory",
    "hoeffding_min_samples",
    "CheckResult",
    "reach_avoid_prob",
    "check_spec",
    "mdp_max_reach",
    "__version__",
]
