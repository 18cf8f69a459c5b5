"""Multi-frame optical flow fusion at desk scale.

The package estimates or ingests pairwise optical flow, warps past flow
into the current frame, and fuses the resulting candidates with an oracle,
a heuristic, or a small trained network, together with region-partitioned
evaluation and synthetic data generation.
"""

from .core import (
    FlowField,
    ImageBuffer,
    bilinear_sample,
    brightness_error,
    compose_warp_chain,
    flow_magnitude,
    out_of_boundary_mask,
    warp_flow,
    warp_image,
)

__version__ = "0.1.0"

__all__ = [
    "FlowField",
    "ImageBuffer",
    "bilinear_sample",
    "brightness_error",
    "compose_warp_chain",
    "flow_magnitude",
    "out_of_boundary_mask",
    "warp_flow",
    "warp_image",
    "__version__",
]
