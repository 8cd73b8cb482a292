"""Figures of merit for one trial and their aggregation over trials."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .channels import ChannelSet
from .leakage import direct_leakage, interference_leakage


class UndefinedMetric(ValueError):
    pass


@dataclass
class TrialResult:
    il: float
    delta_inr_db: float
    rates: np.ndarray
    sum_rate: float = field(init=False)
    traces: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        self.sum_rate = float(np.sum(self.rates))


def delta_inr_db(channels: ChannelSet, theta: np.ndarray) -> float:
    """Leakage with the surface relative to the leakage without it, in dB."""
    base = direct_leakage(channels)
    if base <= 0:
        raise UndefinedMetric("no direct-link interference to compare against")
    return 10.0 * np.log10(interference_leakage(channels, theta) / base)


def aggregate(results: Sequence[TrialResult], inr_domain: str = "db") -> Dict[str, Dict[str, float]]:
    """Mean, standard deviation and count of each metric.

    ``inr_domain='db'`` averages ΔINR in dB; ``'linear'`` averages the power
    ratios and converts the mean back to dB.
    """
    if not results:
        raise ValueError("cannot aggregate an empty result list")
    if inr_domain not in ("db", "linear"):
        raise ValueError(f"unknown domain {inr_domain!r}")
    out = {}
    inr = np.array([r.delta_inr_db for r in results])
    if inr_domain == "linear":
        lin = 10.0 ** (inr / 10.0)
        out["delta_inr_db"] = {"mean": float(10 * np.log10(lin.mean())),
                               "std": float(np.std(10 * np.log10(lin))), "count": len(results)}
    else:
        out["delta_inr_db"] = _summary(inr)
    out["il"] = _summary(np.array([r.il for r in results]))
    out["sum_rate"] = _summary(np.array([r.sum_rate for r in results]))
    return out


def _summary(x: np.ndarray) -> Dict[str, float]:
    return {"mean": float(np.mean(x)), "std": float(np.std(x)), "count": int(x.size)}
