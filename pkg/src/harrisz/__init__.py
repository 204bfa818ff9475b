"""HarrisZ and HarrisZ+ multi-scale corner detection."""
from .detector import DetectionResult, DetectorConfig, default_config, detect
from .selection import KEYPOINT_DTYPE, Keypoint, as_records

__all__ = [
    "DetectionResult",
    "DetectorConfig",
    "KEYPOINT_DTYPE",
    "Keypoint",
    "as_records",
    "default_config",
    "detect",
]
__version__ = "0.1.0"
