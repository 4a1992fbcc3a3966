"""Seeded generators for low-rank test tensors and synthetic videos."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .kruskal import KruskalModel, reconstruct
from .solver import default_rank_bound
from .tensor import DenseTensor3

__all__ = [
    "SynthSpec",
    "make_ground_truth",
    "default_rank_bound",
    "BENCHMARK_BOUNDS",
    "MovingSquareVideo",
    "make_moving_square_video",
]

# rank bounds used for the cubic benchmark sizes 5, 7 and 10
BENCHMARK_BOUNDS = {5: 10, 7: 15, 10: 20}

FACTOR_DISTS = ("standard_normal", "uniform01")
WEIGHT_DISTS = ("ones", "uniform")


@dataclass(frozen=True)
class SynthSpec:
    dims: tuple[int, int, int]
    true_rank: int
    seed: int = 0
    factor_dist: str = "standard_normal"
    weight_dist: str = "uniform"
    noise_sigma: float = 0.0

    def validate(self):
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ConfigError(f"dims must be three positive integers, got {self.dims}")
        if self.true_rank < 1:
            raise ConfigError(f"true_rank must be >= 1, got {self.true_rank}")
        if not self.noise_sigma >= 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.factor_dist not in FACTOR_DISTS:
            raise ConfigError(f"factor_dist must be one of {FACTOR_DISTS}")
        if self.weight_dist not in WEIGHT_DISTS:
            raise ConfigError(f"weight_dist must be one of {WEIGHT_DISTS}")
        return self


def make_ground_truth(spec: SynthSpec):
    """Return ``(tensor, truth)`` with ``tensor = reconstruct(truth) + noise``.

    Weights are uniform on [0.5, 1.5] by default so that no true component is
    negligible.
    """
    spec.validate()
    i, j, k = (int(d) for d in spec.dims)
    R = int(spec.true_rank)
    rng = np.random.default_rng(spec.seed)
    if spec.factor_dist == "standard_normal":
        A, B, C = (rng.standard_normal((n, R)) for n in (i, j, k))
    else:
        A, B, C = (rng.random((n, R)) for n in (i, j, k))
    if spec.weight_dist == "ones":
        alpha = np.ones(R)
    else:
        alpha = rng.uniform(0.5, 1.5, R)
    truth = KruskalModel(A, B, C, alpha)
    x = reconstruct(truth)
    if spec.noise_sigma > 0:
        x = DenseTensor3(x.data + spec.noise_sigma * rng.standard_normal((i, j, k)))
    return x, truth


@dataclass(frozen=True)
class MovingSquareVideo:
    tensor: DenseTensor3
    background: np.ndarray  # (I, J) static frame
    mask: np.ndarray        # (I, J, K) bool, True where the object is


def make_moving_square_video(
    shape=(48, 48, 51),
    square=6,
    object_value=1.0,
    seed=0,
) -> MovingSquareVideo:
    """Static smooth background with a bright square sliding across it.

    The background is a constant plus three separable cosine patterns, so
    it has matrix rank at most four and stays within [0.65, 0.95]; the
    square follows a diagonal zig-zag and moves in every frame.
    """
    i, j, k = shape
    rng = np.random.default_rng(seed)
    u = np.linspace(0.0, 1.0, i)
    v = np.linspace(0.0, 1.0, j)
    bg = np.full((i, j), 0.8)
    for _ in range(3):
        fu, fv = rng.uniform(0.5, 2.0, 2)
        pu, pv = rng.uniform(0.0, 2 * np.pi, 2)
        bg += 0.05 * np.outer(np.cos(2 * np.pi * fu * u + pu), np.cos(2 * np.pi * fv * v + pv))
    frames = np.repeat(bg[:, :, None], k, axis=2)
    mask = np.zeros((i, j, k), dtype=bool)
    span_i, span_j = i - square, j - square
    for t in range(k):
        s = t / max(k - 1, 1)
        r0 = int(round(span_i * s))
        # triangular wave in the column direction
        c0 = int(round(span_j * (1 - abs(1 - 2 * ((2 * s) % 1.0)))))
        mask[r0:r0 + square, c0:c0 + square, t] = True
    frames[mask] = object_value
    return MovingSquareVideo(DenseTensor3(frames), bg, mask)
