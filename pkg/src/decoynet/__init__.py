"""decoynet: a turn-based network-defense game with honey-net deception,
probabilistic benign traffic, a scripted attacker that can poison the
defender's observations, a desk-scale RL defender, and a wire protocol for
driving episodes from other processes.
"""

from .agents import (
    GrayAppSpec,
    RED_GOALS,
    RedBelief,
    apply_red_action,
    gray_step,
    red_plan_step,
    red_update_belief,
)
from .behavior import (
    GenerativeProgram,
    Trace,
    TraceEvent,
    WeightedTraceSet,
    enumerate_traces,
    exact_posterior,
    make_program,
    poisson_feature_likelihood,
    posterior_traces,
    sample_trace,
    score_trace,
    total_variation,
)
from .config import ExperimentConfig, load_config, parse_config
from .deception import (
    AdversarialObjective,
    DeceptionPlan,
    FeasibleObservationSet,
    deceptive_red_step,
    degrade_objective,
    induce_objective,
    infer_deceptive_actions,
    select_target_observation,
)
from .errors import (
    ConfigError,
    ContractViolationError,
    DecoynetError,
    DegeneratePosteriorError,
    EpisodeFinishedError,
    InvalidActionError,
    NumericError,
    ProgramError,
)
from .game import (
    BlueAction,
    DeceptionParams,
    FEATURES,
    GameConfig,
    Isolate,
    MigrateExisting,
    MigrateNew,
    NoOp,
    ObservationMatrix,
    RewardParams,
    StepResult,
    TERMINATIONS,
    Terminate,
    count_events,
    observe,
    play_episode,
    reset,
    reward,
    step,
)
from .learn import Policy, TrainConfig, Transition, act, evaluate, train, update
from .netmodel import (
    Host,
    NetworkState,
    TopologySpec,
    generate_network,
    isolate_host,
    migrate_to_honey,
    reachable,
)
from .wire import WireSession, serve

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
