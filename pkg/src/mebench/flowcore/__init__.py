from .frames import GrayFrame, load_frame, load_rgb_frame, write_pgm
from .hornschunck import FlowField, FlowParams, NonFiniteFlowError, estimate_flow, bilinear_resize, warp_bilinear
from .strain import StrainMap, compute_strain
from .flowimage import (
    OpticalFlowImage,
    NormalizationRecord,
    assemble_flow_image,
    read_flow_image,
    write_flow_image,
    FLOW_CLIP,
    STRAIN_CLIP,
)

__all__ = [
    "GrayFrame",
    "load_frame",
    "load_rgb_frame",
    "write_pgm",
    "FlowField",
    "FlowParams",
    "NonFiniteFlowError",
    "estimate_flow",
    "bilinear_resize",
    "warp_bilinear",
    "StrainMap",
    "compute_strain",
    "OpticalFlowImage",
    "NormalizationRecord",
    "assemble_flow_image",
    "read_flow_image",
    "write_flow_image",
    "FLOW_CLIP",
    "STRAIN_CLIP",
]
