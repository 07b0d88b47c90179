"""Pixel + depth to robot-frame coordinates for a calibrated pinhole camera."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_CONDITION = 1e12


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    """Intrinsics plus the camera-to-robot rotation and translation."""

    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.intrinsics, dtype=np.float64)
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if k.shape != (3, 3) or r.shape != (3, 3) or t.shape != (3,):
            raise CalibrationError("intrinsics and rotation must be 3x3, translation a 3-vector")
        if not np.isfinite(k).all() or np.linalg.cond(k) > MAX_CONDITION:
            raise CalibrationError("intrinsic matrix is singular or ill-conditioned")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise CalibrationError("rotation must be orthonormal with determinant 1")
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_config(cls, values: dict) -> "CameraModel":
        """Build from flat row-major lists under ``intrinsics``, ``rotation``, ``translation``."""
        return cls(
            np.reshape(values["intrinsics"], (3, 3)),
            np.reshape(values["rotation"], (3, 3)),
            np.asarray(values["translation"], dtype=np.float64),
        )


def pixel_to_robot(u: float, v: float, z: float, cam: CameraModel) -> np.ndarray:
    """Back-project pixel (u, v) at depth z: R * z * K^-1 [u, v, 1] + T."""
    if not z > 0:
        raise ValueError(f"depth must be positive, got {z}")
    ray = np.linalg.solve(cam.intrinsics, np.array([u, v, 1.0]))
    return cam.rotation @ (z * ray) + cam.translation
