"""Counterfactual identification from observational, interventional and counterfactual data."""
from .bounds import BowData, polytope_bounds, unit_selection
from .dsl import parse_query, parse_regime, parse_regimes, render_query
from .engine import FailCertificate, IdResult, identify
from .estimand import evaluate, render
from .graph import CausalDiagram, parse_graph
from .layers import classify_layer, realizable_check
from .regime import CtfRand, Rand, RegimeSpec, regime_regex
from .scm import DiscreteSCM, l3_valuation, random_scm, regime_distribution
from .witness import hedge_witness, thicket_witness

__version__ = "0.1.0"

__all__ = [
    "BowData", "CausalDiagram", "CtfRand", "DiscreteSCM", "FailCertificate", "IdResult",
    "Rand", "RegimeSpec", "classify_layer", "evaluate", "hedge_witness", "identify",
    "l3_valuation", "parse_graph", "parse_query", "parse_regime", "parse_regimes",
    "polytope_bounds", "random_scm", "realizable_check", "regime_distribution",
    "regime_regex", "render", "render_query", "thicket_witness", "unit_selection",
]
