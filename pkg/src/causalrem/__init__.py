"""Causal discovery for relational event streams.

Simulate structural relational event models, reduce event streams to
case-control pairs, and select causal covariates as the minimum-BIC subset
among those whose Pearson risk passes a two-sided chi-square test.
"""

__version__ = "0.1.0"

from .core import (CaseControlPair, CausalREMError, Event, EventStream, PairTable,
                   RiskSetPolicy, SubsetModel, validate_stream)
from .discovery import DiscoveryReport, discover, replicate_study, risk_grid
from .sampler import ArrayPanel, sample_pairs
from .simengine import preset_seven_cov, preset_two_cov, simulate

__all__ = [
    "ArrayPanel", "CaseControlPair", "CausalREMError", "DiscoveryReport", "Event",
    "EventStream", "PairTable", "RiskSetPolicy", "SubsetModel", "discover",
    "preset_seven_cov", "preset_two_cov", "replicate_study", "risk_grid",
    "sample_pairs", "simulate", "validate_stream",
]
