"""Differentially private energy-sharing equilibrium seeking over an OTA MIMO uplink."""

from .channel import ChannelRealization, RngStream
from .market import MarketConfig, Prosumer, gne_oracle, table_one_prosumers
from .runner import RunConfig, run_monte_carlo, run_trial

__version__ = "0.1.0"

__all__ = [
    "ChannelRealization",
    "MarketConfig",
    "Prosumer",
    "RngStream",
    "RunConfig",
    "gne_oracle",
    "run_monte_carlo",
    "run_trial",
    "table_one_prosumers",
    "__version__",
]
