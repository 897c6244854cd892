from .loop import ExplorationResult, Limits, TimelineRow, run_exploration
from .planner import Planner, astar, plan_path
from .strategy import (
    BASELINE_RRT,
    SEMANTIC,
    ExplorationState,
    FrontierPoint,
    RrtTree,
    StrategyConfig,
    detect_frontiers,
    grow_tree_step,
    info_gain,
    path_cost,
    sample_point,
    sampling_probabilities,
    score_frontier,
    select_nbv,
    semantic_frontier_point,
)
