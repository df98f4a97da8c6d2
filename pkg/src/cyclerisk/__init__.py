"""Route risk assessment for cyclists from ride video, detections, and sensor logs."""

__version__ = "0.1.0"
