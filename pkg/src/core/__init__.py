"""
SwiptMDP - Core Module
Circuit simulation, surrogates, the harvester MDP, the information channel
and the input-design optimizers.
"""

__version__ = "1.0.0"

from .config_manager import ScenarioManager, load_scenario
from .error_handler import SwiptError

__all__ = ['ScenarioManager', 'SwiptError', 'load_scenario', '__version__']
