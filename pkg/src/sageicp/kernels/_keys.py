import numpy as np

KEY_BITS = 21
KEY_OFFSET = 1 << (KEY_BITS - 1)
KEY_MASK = (1 << KEY_BITS) - 1


def voxel_coords(points: np.ndarray, voxel_size: float) -> np.ndarray:
    return np.floor(np.asarray(points) / voxel_size).astype(np.int64)


def pack_keys(ijk: np.ndarray) -> np.ndarray:
    """Collision-free int64 key per voxel triple; each axis must fit in 21 signed bits."""
    shifted = np.asarray(ijk, dtype=np.int64) + KEY_OFFSET
    if shifted.size and (shifted.min() < 0 or shifted.max() > KEY_MASK):
        raise ValueError("voxel index outside the representable range (+-2**20 cells)")
    return (shifted[..., 0] << (2 * KEY_BITS)) | (shifted[..., 1] << KEY_BITS) | shifted[..., 2]


def unpack_keys(keys: np.ndarray) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty(keys.shape + (3,), dtype=np.int64)
    out[..., 0] = (keys >> (2 * KEY_BITS)) & KEY_MASK
    out[..., 1] = (keys >> KEY_BITS) & KEY_MASK
    out[..., 2] = keys & KEY_MASK
    return out - KEY_OFFSET


def neighbor_offsets() -> np.ndarray:
    """The 27 cell offsets in the fixed lexicographic order used for tie-breaking."""
    r = np.arange(-1, 2)
    return np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
