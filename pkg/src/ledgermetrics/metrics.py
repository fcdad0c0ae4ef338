"""Decentralization metrics over a ResourceDistribution.

Every metric reads the full population, so zero-amount members take part
wherever the definition depends on them (Gini, Theil). No metric filters
the distribution itself; apply thresholds beforehand.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime

import numpy as np

from . import _backend
from .errors import InvalidM, InvalidTau, LedgerMetricsError, ZeroTotal
from .model import ResourceDistribution

log = logging.getLogger(__name__)

METRIC_NAMES = ("entropy", "gini", "nakamoto", "tau", "cr", "hhi", "parties", "theil")

HHI_MODERATE = 1500.0
HHI_HIGH = 2500.0


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    n: int
    snapshot: datetime | date | None = None
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        base = self.name.split("_", 1)[0]
        if base not in METRIC_NAMES:
            raise LedgerMetricsError(f"unknown metric {self.name!r}")
        if not math.isfinite(self.value):
            raise LedgerMetricsError(f"{self.name} is not finite: {self.value}")


def _amounts(d: ResourceDistribution) -> np.ndarray:
    x = d.amounts_desc
    if x.size == 0 or not x.sum() > 0:
        raise ZeroTotal("distribution has zero total resource")
    return x


def entropy(d: ResourceDistribution, base: float = 2.0) -> float:
    x = _amounts(d)
    p = x[x > 0] / x.sum()
    if base == 2.0:
        return max(-math.fsum((p * np.log2(p)).tolist()), 0.0)
    return max(-math.fsum((p * np.log(p)).tolist()) / math.log(base), 0.0)


def gini(d: ResourceDistribution) -> float:
    x = _amounts(d)
    return float(_backend.gini_sorted(np.ascontiguousarray(x[::-1])))


def tau_index(d: ResourceDistribution, tau: float) -> int:
    """Fewest entities whose combined share strictly exceeds ``tau``."""
    if not 0.0 < tau < 1.0:
        raise InvalidTau(f"tau must lie in (0, 1), got {tau}")
    x = _amounts(d)
    return int(_backend.prefix_count(x, tau * x.sum()))


def nakamoto(d: ResourceDistribution) -> int:
    return tau_index(d, 0.5)


def concentration_ratio(d: ResourceDistribution, m: int) -> float:
    if m <= 0:
        raise InvalidM(f"m must be positive, got {m}")
    x = _amounts(d)
    if m >= x.size:
        return 1.0
    return min(math.fsum(x[:m].tolist()) / math.fsum(x.tolist()), 1.0)


def hhi(d: ResourceDistribution) -> float:
    """Sum of squared percentage shares, on the 0..10,000 scale."""
    x = _amounts(d)
    pct = 100.0 * x[x > 0] / x.sum()
    return math.fsum((pct * pct).tolist())


def hhi_band(value: float) -> str:
    if value < HHI_MODERATE:
        return "unconcentrated"
    if value <= HHI_HIGH:
        return "moderate"
    return "high"


def num_parties(d: ResourceDistribution) -> int:
    return int(np.count_nonzero(d.amounts_desc > 0))


def theil(d: ResourceDistribution) -> float:
    x = _amounts(d)
    mu = x.sum() / x.size
    r = x[x > 0] / mu
    return max(math.fsum((r * np.log(r)).tolist()) / x.size, 0.0)


@dataclass(frozen=True)
class MetricSpec:
    """One metric column: base name plus its parameter, if any."""

    name: str
    param: float | None = None

    @property
    def label(self) -> str:
        if self.param is None:
            return self.name
        p = int(self.param) if self.name == "cr" else self.param
        return f"{self.name}_{p:g}" if self.name == "tau" else f"{self.name}_{p}"

    @classmethod
    def parse(cls, text: str) -> "MetricSpec":
        """``gini``, ``tau_0.33``, ``cr_3`` ..."""
        name, _, param = text.strip().partition("_")
        if name not in METRIC_NAMES:
            raise LedgerMetricsError(f"unknown metric {text!r}")
        if name in ("tau", "cr"):
            if not param:
                raise LedgerMetricsError(f"metric {name} needs a parameter, e.g. {name}_3")
            return cls(name, int(param) if name == "cr" else float(param))
        if param:
            raise LedgerMetricsError(f"metric {name} takes no parameter")
        return cls(name)


DEFAULT_METRICS = (
    MetricSpec("entropy"),
    MetricSpec("gini"),
    MetricSpec("nakamoto"),
    MetricSpec("tau", 0.33),
    MetricSpec("cr", 3),
    MetricSpec("hhi"),
    MetricSpec("parties"),
)


def evaluate(d: ResourceDistribution, spec: MetricSpec, *, entropy_base: float = 2.0) -> MetricValue:
    flags: tuple[str, ...] = ()
    if spec.name == "entropy":
        value = entropy(d, entropy_base)
    elif spec.name == "gini":
        value = gini(d)
    elif spec.name == "nakamoto":
        value = nakamoto(d)
    elif spec.name == "tau":
        value = tau_index(d, spec.param)
    elif spec.name == "cr":
        value = concentration_ratio(d, spec.param)
        if spec.param > d.n:
            flags = ("m_exceeds_n",)
    elif spec.name == "hhi":
        value = hhi(d)
        flags = (hhi_band(value),)
    elif spec.name == "parties":
        value = num_parties(d)
    elif spec.name == "theil":
        value = theil(d)
    else:
        raise LedgerMetricsError(f"unknown metric {spec.name!r}")
    return MetricValue(spec.label, float(value), d.n, d.snapshot, flags)


def evaluate_all(d, specs=DEFAULT_METRICS, *, entropy_base: float = 2.0) -> dict[str, MetricValue]:
    """Evaluate ``specs``; metrics undefined on ``d`` are left out and logged."""
    out = {}
    for spec in specs:
        try:
            out[spec.label] = evaluate(d, spec, entropy_base=entropy_base)
        except ZeroTotal:
            log.info("%s undefined at %s: zero total", spec.label, d.snapshot)
    return out
