"""Voxel grid containers: scalar volumes, binary masks, label maps, structuring elements.

Conventions used throughout the package:

* Arrays are indexed ``[x, y, z]`` with shape ``(nx, ny, nz)``.
* The canonical linear (flat) voxel order is x-fastest, i.e. Fortran order
  of the ``(nx, ny, nz)`` array.  File IO and tie-breaking rules refer to
  this order.
* The axial plane is a fixed-z slice; z is the slice axis.
* Spacing is mm per voxel along (x, y, z); origin is the mm position of
  voxel (0, 0, 0).

All containers are treated as immutable after construction: operations take
grids in and return new grids, so shared read-only inputs are safe to use
concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

Triple = tuple[float, float, float]


def _check_geometry(dims, spacing, data, expected_dtype=None):
    if len(dims) != 3 or any(int(d) < 1 for d in dims):
        raise ParameterError(f"dims must be three counts >= 1, got {dims}")
    if len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise ParameterError(f"spacing must be three positive mm values, got {spacing}")
    if tuple(data.shape) != tuple(int(d) for d in dims):
        raise ParameterError(f"data shape {data.shape} does not match dims {dims}")


@dataclass
class ScalarVolume:
    """A 3D scalar field (CT intensities in HU, or derived fields like speed or arrival time)."""

    data: np.ndarray
    spacing: Triple = (1.0, 1.0, 1.0)
    origin: Triple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ParameterError(f"volume data must be 3D, got {self.data.ndim}D")
        self.spacing = tuple(float(s) for s in self.spacing)
        self.origin = tuple(float(o) for o in self.origin)
        _check_geometry(self.dims, self.spacing, self.data)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def same_geometry(self, other) -> bool:
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and self.origin == other.origin
        )

    def index_to_mm(self, idx) -> np.ndarray:
        """Map voxel indices (..., 3) to mm coordinates."""
        idx = np.asarray(idx, dtype=float)
        return np.asarray(self.origin) + idx * np.asarray(self.spacing)

    def with_data(self, data: np.ndarray) -> "ScalarVolume":
        return ScalarVolume(data, self.spacing, self.origin)


@dataclass
class BinaryMask:
    """A {0,1} grid sharing its parent volume's geometry."""

    data: np.ndarray
    spacing: Triple = (1.0, 1.0, 1.0)
    origin: Triple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.data = np.asarray(self.data).astype(bool, copy=False)
        if self.data.ndim != 3:
            raise ParameterError(f"mask data must be 3D, got {self.data.ndim}D")
        self.spacing = tuple(float(s) for s in self.spacing)
        self.origin = tuple(float(o) for o in self.origin)
        _check_geometry(self.dims, self.spacing, self.data)

    dims = ScalarVolume.dims
    voxel_volume_mm3 = ScalarVolume.voxel_volume_mm3
    same_geometry = ScalarVolume.same_geometry
    index_to_mm = ScalarVolume.index_to_mm

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def is_empty(self) -> bool:
        return not self.data.any()

    def with_data(self, data: np.ndarray) -> "BinaryMask":
        return BinaryMask(data, self.spacing, self.origin)

    @classmethod
    def empty_like(cls, ref) -> "BinaryMask":
        return cls(np.zeros(ref.dims, dtype=bool), ref.spacing, ref.origin)


@dataclass
class LabelMap:
    """Non-negative integer labels per voxel; 0 is background.

    After any relabel operation the label set is contiguous {0..L}.
    """

    data: np.ndarray
    spacing: Triple = (1.0, 1.0, 1.0)
    origin: Triple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ParameterError(f"label data must be 3D, got {self.data.ndim}D")
        if not np.issubdtype(self.data.dtype, np.integer):
            raise ParameterError(f"labels must be integers, got {self.data.dtype}")
        if self.data.size and int(self.data.min()) < 0:
            raise ParameterError("labels must be non-negative")
        self.data = self.data.astype(np.int32, copy=False)
        self.spacing = tuple(float(s) for s in self.spacing)
        self.origin = tuple(float(o) for o in self.origin)
        _check_geometry(self.dims, self.spacing, self.data)

    dims = ScalarVolume.dims
    voxel_volume_mm3 = ScalarVolume.voxel_volume_mm3
    same_geometry = ScalarVolume.same_geometry
    index_to_mm = ScalarVolume.index_to_mm

    @property
    def max_label(self) -> int:
        return int(self.data.max()) if self.data.size else 0

    def mask_of(self, label: int) -> BinaryMask:
        return BinaryMask(self.data == label, self.spacing, self.origin)

    def with_data(self, data: np.ndarray) -> "LabelMap":
        return LabelMap(data, self.spacing, self.origin)


@dataclass
class StructuringElement:
    """A box or ball neighborhood used by the morphology operations.

    ``size`` is the full extent per axis for boxes (even sizes allowed; the
    center is at ``size // 2``).  ``radius`` defines balls as the voxel
    offsets with squared Euclidean norm <= radius**2.  2D elements have no
    z extent and are applied slice by slice in the axial plane.
    """

    shape: str
    size: tuple[int, ...] = ()
    radius: int = 0
    ndim: int = 3
    _footprint: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def box(cls, size) -> "StructuringElement":
        size = tuple(int(s) for s in size)
        if len(size) not in (2, 3) or any(s < 1 for s in size):
            raise ParameterError(f"box size must be 2 or 3 positive extents, got {size}")
        return cls(shape="box", size=size, ndim=len(size))

    @classmethod
    def ball(cls, radius: int, ndim: int = 3) -> "StructuringElement":
        if radius < 0 or ndim not in (2, 3):
            raise ParameterError(f"ball radius must be >= 0 and ndim 2 or 3, got {radius}, {ndim}")
        return cls(shape="ball", radius=int(radius), ndim=ndim)

    def footprint(self) -> np.ndarray:
        """Boolean offset grid, always 3D with z extent 1 for 2D elements."""
        if self._footprint is not None:
            return self._footprint
        if self.shape == "box":
            ext = self.size if self.ndim == 3 else (*self.size, 1)
            fp = np.ones(ext, dtype=bool)
        elif self.shape == "ball":
            r = self.radius
            ax = np.arange(-r, r + 1)
            if self.ndim == 3:
                dx, dy, dz = np.meshgrid(ax, ax, ax, indexing="ij")
                fp = dx * dx + dy * dy + dz * dz <= r * r
            else:
                dx, dy = np.meshgrid(ax, ax, indexing="ij")
                fp = (dx * dx + dy * dy <= r * r)[:, :, None]
        else:
            raise ParameterError(f"unknown element shape {self.shape!r}")
        object.__setattr__(self, "_footprint", fp)
        return fp

    def center(self) -> tuple[int, int, int]:
        fp = self.footprint()
        return tuple(s // 2 for s in fp.shape)

    def offsets(self) -> np.ndarray:
        """(n, 3) integer offsets of the set footprint voxels relative to the center."""
        fp = self.footprint()
        c = np.array(self.center())
        return np.argwhere(fp) - c


def flat_index(dims, coords) -> np.ndarray:
    """Canonical x-fastest linear index of voxel coordinates (..., 3)."""
    coords = np.asarray(coords)
    nx, ny, _nz = dims
    return coords[..., 0] + nx * (coords[..., 1] + ny * coords[..., 2])
