"""Learning stage: networks, losses and agents."""
from .agents import DqnAgent, OiodrlAgent, PpoOnlyAgent, load_agent, make_agent, mask_and_select
from .losses import Hyperparams, gae_advantages
from .train import LearningCurve, plateau, train_agent

__all__ = ["DqnAgent", "OiodrlAgent", "PpoOnlyAgent", "load_agent", "make_agent", "mask_and_select",
           "Hyperparams", "gae_advantages", "LearningCurve", "plateau", "train_agent"]
