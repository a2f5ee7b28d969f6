"""Control-based continuation of equilibria and periodic orbits on simulated experiments."""
from .control import ControlLoop, FilterSpec, LoopSettings, PDGains
from .plant import PlantConfig, make_plant
from .signal import FourierVector, measures, project

__version__ = "0.1.0"

__all__ = ["ControlLoop", "FilterSpec", "FourierVector", "LoopSettings", "PDGains", "PlantConfig",
           "make_plant", "measures", "project"]
