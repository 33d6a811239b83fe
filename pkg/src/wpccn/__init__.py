"""Scheduling, power control and relay selection for wireless powered cooperative networks."""

from .netmodel import (
    ChannelModelConfig,
    ChannelSet,
    GeometryConfig,
    NetworkInstance,
    Positions,
    SystemParams,
    load_instance,
    random_instance,
    scenario_instance,
)
from .relaxation import build_relaxation, solve_relaxation
from .relay import (
    FullSchedule,
    assignment_to_links,
    bba,
    exhaustive,
    htc_baseline,
    obh,
    or_criterion,
    or_powmu,
    relay_benefit,
    rph,
    rstma,
    solve_assignment,
)
from .scheduling import InfeasibleError, Schedule, SchedulingInstance, max_eh, powmu
from .single import LinkSolution, SourceLink, optimal_single, v_curve

__version__ = "0.1.0"

__all__ = [
    "ChannelModelConfig",
    "ChannelSet",
    "FullSchedule",
    "GeometryConfig",
    "InfeasibleError",
    "LinkSolution",
    "NetworkInstance",
    "Positions",
    "Schedule",
    "SchedulingInstance",
    "SourceLink",
    "SystemParams",
    "assignment_to_links",
    "bba",
    "build_relaxation",
    "exhaustive",
    "htc_baseline",
    "load_instance",
    "max_eh",
    "obh",
    "optimal_single",
    "or_criterion",
    "or_powmu",
    "powmu",
    "random_instance",
    "relay_benefit",
    "rph",
    "rstma",
    "scenario_instance",
    "solve_assignment",
    "solve_relaxation",
    "v_curve",
]
