"""Rotary positional encoding on lattice offsets.

Head channels are split as evenly as possible across the three cube axes
(u, v, w); within each axis block, channel pairs (2k, 2k+1) rotate by
theta_k = offset * base^(-2k/D_c). Channels left over when the head dim is
not divisible by the axis count pass through unrotated. Rotations are
isometries, and because angles are linear in the offsets, query/key dot
products depend only on offset differences.

A two-axis variant with real-valued (x, y) offsets serves as the Cartesian
ablation; offsets there are expected in units of the lattice spacing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ShapeError


@dataclass(frozen=True)
class RopeConfig:
    """Channel layout for rotary encoding over n_axes lattice axes."""

    head_dim: int
    base: float = 10000.0
    n_axes: int = 3

    def __post_init__(self):
        if self.head_dim < 1:
            raise InputError("head_dim must be >= 1")
        if self.n_axes not in (2, 3):
            raise InputError("n_axes must be 2 or 3")

    @property
    def per_axis(self) -> int:
        """Channels per axis block; even so pairs rotate together."""
        return 2 * (self.head_dim // (2 * self.n_axes))

    @property
    def remainder(self) -> int:
        return self.head_dim - self.n_axes * self.per_axis


def rope_frequencies(cfg: RopeConfig) -> np.ndarray:
    """omega_k = base^(-2k/D_c) for k = 0 .. D_c/2 - 1."""
    half = cfg.per_axis // 2
    k = np.arange(half, dtype=np.float64)
    return cfg.base ** (-2.0 * k / cfg.per_axis) if half else np.zeros(0)


def rope_angles(cfg: RopeConfig, delta) -> np.ndarray:
    """Rotation angles for one axis offset: delta * omega_k, shape (..., D_c/2)."""
    delta = np.asarray(delta, dtype=np.float64)
    return delta[..., None] * rope_frequencies(cfg)


def _rotate(h: np.ndarray, axis_offsets: np.ndarray, cfg: RopeConfig) -> np.ndarray:
    if h.shape[-1] != cfg.head_dim:
        raise ShapeError(f"feature dim {h.shape[-1]} != head_dim {cfg.head_dim}")
    if axis_offsets.shape[-1] != cfg.n_axes:
        raise ShapeError(f"offsets last axis must be {cfg.n_axes}")
    out = np.array(h, dtype=np.float64, copy=True)
    dc = cfg.per_axis
    if dc == 0:
        return out
    freq = rope_frequencies(cfg)
    for a in range(cfg.n_axes):
        theta = axis_offsets[..., a, None] * freq
        cos = np.cos(theta)
        sin = np.sin(theta)
        block = h[..., a * dc:(a + 1) * dc]
        x = block[..., 0::2]
        y = block[..., 1::2]
        out[..., a * dc:(a + 1) * dc:2] = x * cos - y * sin
        out[..., a * dc + 1:(a + 1) * dc:2] = x * sin + y * cos
    return out


def apply_hex_rope(h: np.ndarray, cube_offsets: np.ndarray,
                   cfg: RopeConfig) -> np.ndarray:
    """Rotate per-head features by their integer cube offsets (du, dv, dw)."""
    h = np.asarray(h, dtype=np.float64)
    cube_offsets = np.asarray(cube_offsets, dtype=np.float64)
    if cfg.n_axes != 3:
        raise InputError("hex rope needs a 3-axis config")
    if cube_offsets.shape[-1] != 3:
        raise ShapeError("cube offsets must have a last axis of 3")
    if np.any(np.abs(cube_offsets.sum(axis=-1)) > 1e-9):
        raise InputError("cube offsets must satisfy du + dv + dw = 0")
    return _rotate(h, cube_offsets, cfg)


def apply_hex_rope_vjp(grad: np.ndarray, cube_offsets: np.ndarray,
                       cfg: RopeConfig) -> np.ndarray:
    """Gradient through the rotation: rotate back by the negated offsets."""
    return apply_hex_rope(grad, -np.asarray(cube_offsets, dtype=np.float64), cfg)


def apply_rope_2d(h: np.ndarray, xy_offsets: np.ndarray,
                  cfg: RopeConfig) -> np.ndarray:
    """Two-axis Cartesian variant with real-valued offsets."""
    h = np.asarray(h, dtype=np.float64)
    xy_offsets = np.asarray(xy_offsets, dtype=np.float64)
    if cfg.n_axes != 2:
        raise InputError("2d rope needs a 2-axis config")
    return _rotate(h, xy_offsets, cfg)


def apply_rope_2d_vjp(grad: np.ndarray, xy_offsets: np.ndarray,
                      cfg: RopeConfig) -> np.ndarray:
    return apply_rope_2d(grad, -np.asarray(xy_offsets, dtype=np.float64), cfg)


def axial_to_cube(offsets: np.ndarray) -> np.ndarray:
    """Lift integer axial offsets (dq, dr) to cube triples (dq, dr, -dq-dr)."""
    offsets = np.asarray(offsets)
    w = -offsets[..., 0] - offsets[..., 1]
    return np.concatenate([offsets, w[..., None]], axis=-1)
