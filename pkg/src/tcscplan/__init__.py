"""TCSC placement planning under N-1 security with a DC network model."""
from .case import (CaseError, LoadLevel, PlanningScenario, PowerCase, ScenarioError,
                   enumerate_states, load_scenario, parse_matpower_case, read_case)
from .builder import build_planning_model, extract_breakdown
from .network import dc_power_flow, screen_candidates

__version__ = "0.1.0"

__all__ = [
    "CaseError", "LoadLevel", "PlanningScenario", "PowerCase", "ScenarioError",
    "enumerate_states", "load_scenario", "parse_matpower_case", "read_case",
    "build_planning_model", "extract_breakdown", "dc_power_flow", "screen_candidates",
]
