"""Sybil attacks on crowd-sensed navigation: simulation and impact metrics."""

from ._sybilsim import (
    AttackSpec,
    ConfigError,
    EdgeSpeedWindow,
    NetworkError,
    ParseError,
    RoadNetwork,
    RunArtifacts,
    ScenarioConfig,
    betweenness_centrality,
    build_demand,
    build_network,
    compute_impact,
    generate_grid,
    load_network,
    load_scenario,
    minimal_strength_search,
    parse_network,
    parse_scenario,
    run_simulation,
    run_sweep,
    select_targets,
    shortest_path,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
