"""loopstage: turn static-camera video into triggerable, loopable actors."""

__version__ = "0.1.0"
