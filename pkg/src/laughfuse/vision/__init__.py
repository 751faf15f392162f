"""Haar cascade smile detection on grayscale frames."""

from .cascade import CascadeModel, CascadeParseError, parse_cascade_xml, toy_cascade_path
from .detect import (
    DetectionBox,
    DetectionParams,
    SmileSeries,
    detect_multiscale,
    eval_window,
    group_detections,
    smile_presence_series,
)
from .integral import IntegralImage, integral_image, rect_sum

__all__ = [
    "CascadeModel",
    "CascadeParseError",
    "DetectionBox",
    "DetectionParams",
    "IntegralImage",
    "SmileSeries",
    "detect_multiscale",
    "eval_window",
    "group_detections",
    "integral_image",
    "parse_cascade_xml",
    "rect_sum",
    "smile_presence_series",
    "toy_cascade_path",
]
