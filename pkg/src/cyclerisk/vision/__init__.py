"""Frame preparation, corner detection, and sparse optical flow."""

from .clahe import clahe
from .corners import CornerSet, detect_corners, min_eigen_response
from .flow import FlowField, lk_flow
from .frames import GrayFrame

__all__ = [
    "GrayFrame",
    "clahe",
    "CornerSet",
    "detect_corners",
    "min_eigen_response",
    "FlowField",
    "lk_flow",
]
