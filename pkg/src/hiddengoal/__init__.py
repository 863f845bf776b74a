"""Hidden-goal environments with privileged teachers, and students that
learn despite seeing less than the teacher did.

The package splits into: environment families and exact solvers
(`envs`, `teacher`, `beliefs`), policy and dataset primitives
(`policies`), imitation and reinforcement trainers (`imitation`, `rl`),
diagnostics (`metrics`), and an artifact-producing harness with an HTTP
service and CLI on top (`harness`, `service`, `cli`).
"""

from .beliefs import (
    DeltaReport,
    RealizablePolicy,
    bayes_error,
    oracle_critical_states,
    solve_belief_mdp,
)
from .core import (
    ContextualMdp,
    ContractViolation,
    PrivilegedState,
    RngHub,
    Step,
    Trajectory,
    discounted_return,
    replay_check,
    rollout,
    sample_context,
)
from .envs import (
    ENV_KINDS,
    LineSearchEnv,
    PushLineEnv,
    RoomGraphEnv,
    TwoArmedBandit,
    enumerate_states,
    make_env,
    scripted_search_actor,
)
from .harness import (
    ComparisonError,
    ConfigError,
    EnvSection,
    ExperimentConfig,
    compare,
    eval_policy,
    load_config,
    oracle_report,
    parse_config,
    run_experiment,
)
from .imitation import (
    BcConfig,
    CritiqConfig,
    DaggerConfig,
    collect_demos,
    run_bc,
    run_critiq,
    run_dagger,
)
from .metrics import (
    EXPLORATION_LEVELS,
    EvalReport,
    IterationLog,
    delta_curve,
    density_ratio,
    epsilon_decomposition,
    evaluate,
    exploration_level,
)
from .policies import (
    AggDataset,
    DatasetRecord,
    Discriminator,
    LinearSoftmaxPolicy,
    PolicyFormatError,
    TabularPolicy,
    bc_fit,
    load_policy,
    save_policy,
    train_discriminator,
)
from .rl import (
    ResetPool,
    RetryConfig,
    exact_return,
    exact_return_with_grad,
    pg_update,
    run_plain_rl,
    run_retry,
)
from .teacher import TeacherPolicy, plan_teacher

__all__ = [
    "AggDataset",
    "BcConfig",
    "ComparisonError",
    "ConfigError",
    "ContextualMdp",
    "ContractViolation",
    "CritiqConfig",
    "DaggerConfig",
    "DatasetRecord",
    "DeltaReport",
    "Discriminator",
    "ENV_KINDS",
    "EXPLORATION_LEVELS",
    "EnvSection",
    "EvalReport",
    "ExperimentConfig",
    "IterationLog",
    "LineSearchEnv",
    "LinearSoftmaxPolicy",
    "PolicyFormatError",
    "PrivilegedState",
    "PushLineEnv",
    "RealizablePolicy",
    "ResetPool",
    "RetryConfig",
    "RngHub",
    "RoomGraphEnv",
    "Step",
    "TabularPolicy",
    "TeacherPolicy",
    "Trajectory",
    "TwoArmedBandit",
    "bayes_error",
    "bc_fit",
    "collect_demos",
    "compare",
    "delta_curve",
    "density_ratio",
    "discounted_return",
    "enumerate_states",
    "epsilon_decomposition",
    "eval_policy",
    "evaluate",
    "exact_return",
    "exact_return_with_grad",
    "exploration_level",
    "load_config",
    "load_policy",
    "make_env",
    "oracle_critical_states",
    "oracle_report",
    "parse_config",
    "pg_update",
    "plan_teacher",
    "replay_check",
    "rollout",
    "run_bc",
    "run_critiq",
    "run_dagger",
    "run_experiment",
    "run_plain_rl",
    "run_retry",
    "sample_context",
    "save_policy",
    "scripted_search_actor",
    "solve_belief_mdp",
    "train_discriminator",
]
