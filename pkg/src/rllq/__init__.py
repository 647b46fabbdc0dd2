"""Continuous-time LQ reinforcement learning with state- and control-dependent volatility."""

from rllq.oracle import CriticParams, ModelParams, PolicyParams

__all__ = ["CriticParams", "ModelParams", "PolicyParams"]
__version__ = "0.1.0"
