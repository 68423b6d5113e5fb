"""Single-object tracking toolkit for grayscale sonar imagery."""

from .config import TrackerConfig
from .geometry import BBox
from .model import Model, load_model, save_model
from .tracker import SonarTracker

__all__ = ["BBox", "Model", "SonarTracker", "TrackerConfig", "load_model", "save_model"]
__version__ = "0.1.0"
