"""Desk-scale corridor lab for adaptive traffic signal control.

A deterministic 0.1 s corridor microsimulator driven either by NEMA
ring-barrier baseline controllers (coordinated-actuated or fixed-time) or
by multi-agent PPO policies with per-intersection actors and centralized
critics.  See the README for the CLI and the bundled scenarios.
"""

from . import baseline, env, errors, harness, mappo, microsim, nn, scenario, signal_core

__version__ = "0.1.0"

__all__ = [
    "baseline",
    "env",
    "errors",
    "harness",
    "mappo",
    "microsim",
    "nn",
    "scenario",
    "signal_core",
    "__version__",
]
