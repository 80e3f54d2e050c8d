"""Plume Swarm - self-healing drone swarm and independent-search simulator for gas plume localization"""

__version__ = "1.0.0"
__author__ = "Plume Swarm Developers"
__github__ = "plume-swarm"
