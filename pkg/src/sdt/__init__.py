"""Skeleton-aware distance transform (SDT) for instance label maps.

Encode label maps into SDT energy, decode energy back into instances with a
skeleton-seeded watershed, compare against the usual baselines (boundary map,
distance transform, skeleton with scales) and score results with object-level
metrics.
"""

from .decode import DecodeParams, decode_boundary, decode_sdt, decode_ss, extract_seeds, watershed
from .metrics import EvalReport, evaluate, object_dice, object_hausdorff
from .raster import BinaryMask, EnergyMap, LabelMap, PixelSet, read_energy_map, read_label_map, write_energy_map, write_label_map
from .representations import (
    QuantParams,
    SdtParams,
    SkeletonScales,
    dequantize,
    encode_boundary,
    encode_dt,
    encode_sdt,
    encode_ss,
    quantize,
)
from .skeleton import local_skeleton, skeletonize
from .synth import PerturbSpec, SceneSpec, generate, standard_suite

__version__ = "0.1.0"

__all__ = [
    "BinaryMask", "DecodeParams", "EnergyMap", "EvalReport", "LabelMap", "PerturbSpec", "PixelSet",
    "QuantParams", "SceneSpec", "SdtParams", "SkeletonScales",
    "decode_boundary", "decode_sdt", "decode_ss", "dequantize", "encode_boundary", "encode_dt",
    "encode_sdt", "encode_ss", "evaluate", "extract_seeds", "generate", "local_skeleton",
    "object_dice", "object_hausdorff", "quantize", "read_energy_map", "read_label_map",
    "skeletonize", "standard_suite", "watershed", "write_energy_map", "write_label_map",
]
