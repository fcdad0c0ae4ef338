"""Decentralization measurement for blockchain consensus and tokenomics layers."""

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402
from .model import (  # noqa: E402
    BalanceRecord,
    BlockRecord,
    EventLedger,
    MetricSeries,
    ResourceDistribution,
    ResourceKind,
    distribution,
    shares,
)
from .metrics import (  # noqa: E402
    concentration_ratio,
    entropy,
    gini,
    hhi,
    hhi_band,
    nakamoto,
    num_parties,
    tau_index,
    theil,
)

__all__ = [
    "BACKEND",
    "BalanceRecord",
    "BlockRecord",
    "EventLedger",
    "MetricSeries",
    "ResourceDistribution",
    "ResourceKind",
    "concentration_ratio",
    "distribution",
    "entropy",
    "gini",
    "hhi",
    "hhi_band",
    "nakamoto",
    "num_parties",
    "shares",
    "tau_index",
    "theil",
]
