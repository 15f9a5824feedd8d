"""Branch MPC for interaction-aware longitudinal planning."""
from .config import ConfigError, ScenarioConfig, bundled, load_config
from .dynamics import VehicleState
from .planner import BranchPlan, Planner, extract_control

__all__ = ["BranchPlan", "ConfigError", "Planner", "ScenarioConfig", "VehicleState",
           "bundled", "extract_control", "load_config"]
__version__ = "0.1.0"
