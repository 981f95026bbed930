"""srd: spherical-radar detect-and-avoid for powerline environments.

Six-sensor mmWave rig model, reactive wire-avoidance controller,
deterministic simulator, characterization harness, and a WebSocket
piloting service.
"""

__version__ = "0.1.0"
