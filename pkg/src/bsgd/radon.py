"""Parallel-beam Radon projector with exact ray/pixel intersection lengths.

The image is mapped onto the square [-1, 1]^2 (row 0 at the top).  For each
projection angle theta the recording direction is sigma = (cos t, sin t) and
rays travel along sigma-perp = (-sin t, cos t), offset by the detector
coordinate s along sigma.  Detector centers are equispaced midpoints of a
uniform partition of [-1, 1].  Matrix entries are the exact lengths of the
ray segment inside each pixel, obtained by clipping the ray against the
pixel's axis-aligned slabs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

__all__ = ["RadonSystem", "build_radon"]

_LENGTH_CUTOFF = 1e-14


@dataclass(frozen=True)
class RadonSystem:
    """Per-angle sparse projection matrices for one discretization."""

    image_shape: tuple[int, int]
    angles: np.ndarray
    n_detectors: int
    detector_s: np.ndarray
    matrices: tuple[sparse.csr_matrix, ...]

    def __post_init__(self):
        rows, cols = self.image_shape
        if rows <= 0 or cols <= 0:
            raise ValueError(f"image shape must be positive, got {self.image_shape}")
        if self.angles.ndim != 1 or self.angles.size == 0:
            raise ValueError("need at least one projection angle")
        if np.any(np.diff(self.angles) <= 0):
            raise ValueError("angles must be strictly increasing")
        if self.angles[0] < 0 or self.angles[-1] >= np.pi:
            raise ValueError("angles must lie in [0, pi)")
        if len(self.matrices) != self.angles.size:
            raise ValueError("one matrix per angle required")
        for m in self.matrices:
            if m.shape != (self.n_detectors, rows * cols):
                raise ValueError(f"matrix shape {m.shape} inconsistent with system")
            if m.nnz and m.data.min() < 0:
                raise ValueError("intersection lengths must be nonnegative")

    @property
    def n_angles(self) -> int:
        return int(self.angles.size)

    def project(self, angle_index: int, image: np.ndarray) -> np.ndarray:
        """Line integrals at one angle; returns (n_detectors,)."""
        return self.matrices[angle_index] @ np.asarray(image).ravel()

    def back_project(self, angle_index: int, sino: np.ndarray) -> np.ndarray:
        """Transpose action at one angle; returns a flat image array."""
        return self.matrices[angle_index].T @ np.asarray(sino).ravel()


def _slab_interval(p0, direction, lo, hi):
    """t-interval where p0 + t*direction lies in [lo, hi) (one coordinate).

    The degenerate (edge-parallel) branch is half-open so that a ray lying
    exactly on a shared pixel edge is counted in one pixel, not both.
    """
    if abs(direction) > 1e-15:
        t1 = (lo - p0) / direction
        t2 = (hi - p0) / direction
        return np.minimum(t1, t2), np.maximum(t1, t2)
    inside = (p0 >= lo) & (p0 < hi)
    tmin = np.where(inside, -np.inf, np.inf)
    tmax = np.where(inside, np.inf, -np.inf)
    return tmin, tmax


def _angle_matrix(theta, detector_s, x_lo, x_hi, y_lo, y_hi) -> sparse.csr_matrix:
    c, s = np.cos(theta), np.sin(theta)
    # ray: (detector_s*c, detector_s*s) + t*(-s, c); direction is unit length
    p0x = (detector_s * c)[:, None]
    p0y = (detector_s * s)[:, None]
    tx_lo, tx_hi = _slab_interval(p0x, -s, x_lo[None, :], x_hi[None, :])
    ty_lo, ty_hi = _slab_interval(p0y, c, y_lo[None, :], y_hi[None, :])
    lengths = np.minimum(tx_hi, ty_hi) - np.maximum(tx_lo, ty_lo)
    lengths = np.where(lengths > _LENGTH_CUTOFF, lengths, 0.0)
    mat = sparse.csr_matrix(lengths)
    mat.eliminate_zeros()
    return mat


def build_radon(image_shape, n_angles: int, n_detectors: int) -> RadonSystem:
    """Assemble per-angle matrices for equidistant angles {0, pi/n, ...}.

    Deterministic given its inputs; matrices are assembled once and meant to
    be shared read-only afterwards.
    """
    rows, cols = int(image_shape[0]), int(image_shape[1])
    if rows <= 0 or cols <= 0:
        raise ValueError(f"image shape must be positive, got {image_shape}")
    if n_angles < 1 or n_detectors < 1:
        raise ValueError("need at least one angle and one detector")

    angles = np.arange(n_angles) * (np.pi / n_angles)
    detector_s = -1.0 + (np.arange(n_detectors) + 0.5) * (2.0 / n_detectors)

    dx = 2.0 / cols
    dy = 2.0 / rows
    jj, ii = np.meshgrid(np.arange(cols), np.arange(rows))
    jj = jj.ravel()
    ii = ii.ravel()
    x_lo = -1.0 + jj * dx
    x_hi = x_lo + dx
    y_hi = 1.0 - ii * dy
    y_lo = y_hi - dy

    matrices = tuple(
        _angle_matrix(theta, detector_s, x_lo, x_hi, y_lo, y_hi) for theta in angles
    )
    angles_ro = angles.copy()
    angles_ro.setflags(write=False)
    det_ro = detector_s.copy()
    det_ro.setflags(write=False)
    return RadonSystem(
        image_shape=(rows, cols),
        angles=angles_ro,
        n_detectors=n_detectors,
        detector_s=det_ro,
        matrices=matrices,
    )
