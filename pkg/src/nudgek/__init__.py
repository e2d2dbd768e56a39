"""Analysis and simulation of the Nudge-K scheduling policy for two-class
M/PH/1 queues."""
from .phasetype import PhaseType, SystemConfig, normalize_system, ph_make, ph_standard

__all__ = ["PhaseType", "SystemConfig", "normalize_system", "ph_make", "ph_standard"]
__version__ = "0.1.0"
