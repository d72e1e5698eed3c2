"""Uplink channel estimation and downlink channel prediction for TDD
massive MIMO-OTFS links.

The package is organized as a numpy/scipy library: channel synthesis
(:mod:`~otfspred.channel`), OTFS transforms (:mod:`~otfspred.otfs`), pilot
frames (:mod:`~otfspred.pilots`), expansion bases (:mod:`~otfspred.bases`),
the uplink estimator (:mod:`~otfspred.estimation`), downlink predictors
(:mod:`~otfspred.prediction`), metrics (:mod:`~otfspred.metrics`) and a
Monte Carlo harness (:mod:`~otfspred.trial`, :mod:`~otfspred.campaign`)
with a CLI (``otfspred``).
"""

from .config import ConfigError, SimConfig, desk_profile, table3_profile

__all__ = ["ConfigError", "SimConfig", "desk_profile", "table3_profile"]

__version__ = "0.1.0"
