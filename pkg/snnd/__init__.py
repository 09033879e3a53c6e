"""
snnd - Zeitliche Selbstdistillation für spikende neuronale Netze

Zerlegt ein SNN in die Submodelle seiner Zeitschritte und lässt starke und
schwache Submodelle während des Trainings voneinander lernen.
"""

__version__ = "1.0.0"

from .cli import cli, main

__all__ = ["cli", "main", "__version__"]
