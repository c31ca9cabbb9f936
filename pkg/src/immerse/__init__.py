"""Headless, deterministic simulation of a room-scale VR experience: scene
tree, rigid/kinematic physics, tracked devices, a haptic serial device and
byte-deterministic traces."""

from .engine import World
from .sceneio import load_world, parse_scenario, parse_scene

__all__ = ["World", "load_world", "parse_scene", "parse_scenario"]
__version__ = "0.1.0"
