"""Hot loops with two interchangeable backends.

``SAGEICP_NUMBA=0`` in the environment forces the pure-numpy path; otherwise
the numba kernels are used whenever numba imports.
"""
import os

from sageicp.kernels import _numpy as numpy_backend
from sageicp.kernels._keys import neighbor_offsets, pack_keys, unpack_keys, voxel_coords

_want_numba = os.environ.get("SAGEICP_NUMBA", "1").strip().lower() not in ("0", "false", "off", "no")

numba_backend = None
if _want_numba:
    try:
        from sageicp.kernels import _numba as numba_backend
    except ImportError:  # pragma: no cover - numba missing
        numba_backend = None

backend = numba_backend if numba_backend is not None else numpy_backend
BACKEND_NAME = "numba" if backend is numba_backend else "numpy"

semantic_nn = backend.semantic_nn
accumulate_system = backend.accumulate_system
insert_points = backend.insert_points

__all__ = [
    "BACKEND_NAME",
    "accumulate_system",
    "insert_points",
    "neighbor_offsets",
    "numba_backend",
    "numpy_backend",
    "pack_keys",
    "semantic_nn",
    "unpack_keys",
    "voxel_coords",
]
