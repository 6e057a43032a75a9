"""EMF-exposure minimization for an uplink MU-MIMO network assisted by an
aerial reconfigurable intelligent surface.

The package provides the channel/exposure models, the per-block optimizers
(transmit beamforming, surface phases, resource allocation, power control,
trajectory), the alternating-optimization driver, and a Monte Carlo harness
with a command-line front end (``aris-emf``).
"""

from .exposure import (ExposureReport, InfeasibleError, SarModel,
                       default_sar_model, load_sar_model)
from .scenario import (Scenario, SystemParams, desk_scenario, dbm_to_watts,
                       load_scenario, noise_power, save_scenario, watts_to_dbm)

__all__ = [
    "ExposureReport", "InfeasibleError", "SarModel", "Scenario", "SystemParams",
    "default_sar_model", "desk_scenario", "dbm_to_watts", "load_sar_model",
    "load_scenario", "noise_power", "save_scenario", "watts_to_dbm",
]

__version__ = "0.1.0"
