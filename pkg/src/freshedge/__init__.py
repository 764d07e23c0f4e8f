"""Freshness-aware edge service caching: simulator, SDR optimization stage and learning stage."""
from .config import EnvConfig, load_config
from .env import EdgeEnv
from .lyapunov import SlotSubproblem, build_subproblem
from .policy import PolicyKind

__version__ = "0.1.0"

__all__ = ["EnvConfig", "load_config", "EdgeEnv", "SlotSubproblem", "build_subproblem", "PolicyKind"]
