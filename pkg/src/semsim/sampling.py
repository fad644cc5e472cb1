"""Value-of-information gating for semantic map streams.

A candidate map is scored by a weighted sum of its age (ticks since the last
accepted map) and its semantic change degree against the cached copy; it is
transmitted only when the score reaches the configured threshold. Ties at
exactly the threshold transmit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class SemanticMap:
    """Binary task-relevance mask with a frame-tick timestamp."""

    mask: np.ndarray
    timestamp: int

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask, dtype=np.uint8)
        if mask.ndim != 2 or mask.size == 0:
            raise ValueError(f"mask must be a non-empty 2-D grid, got shape {mask.shape}")
        if not np.isin(mask, (0, 1)).all():
            raise ValueError("mask cells must be 0 or 1")
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be >= 0, got {self.timestamp}")
        object.__setattr__(self, "mask", mask)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def pixel_count(self) -> int:
        """Number of task-relevant (value 1) pixels."""
        return int(self.mask.sum())


def aoi(t: int, t_prev: int) -> int:
    """Age of information between two timestamps, in ticks."""
    return abs(t - t_prev)


def change_degree(a: SemanticMap, b: SemanticMap) -> float:
    """Normalized symmetric difference of two masks, in [0, 1].

    (n_a + n_b - 2 n_ab) / (n_a + n_b); two empty masks count as unchanged
    (0), since "no objects anywhere" twice is no change.
    """
    if a.mask.shape != b.mask.shape:
        raise ValueError(f"mask dimensions differ: {a.mask.shape} vs {b.mask.shape}")
    n_a = a.pixel_count
    n_b = b.pixel_count
    if n_a + n_b == 0:
        return 0.0
    n_ab = int((a.mask & b.mask).sum())
    return (n_a + n_b - 2 * n_ab) / (n_a + n_b)


def voi(gamma_aoi: float, gamma_change: float, tau_aoi: float, tau_change: float) -> float:
    """Weighted value-of-information score tau1 * age + tau2 * change."""
    if not (np.isfinite(gamma_aoi) and np.isfinite(gamma_change)):
        raise ValueError("VoI inputs must be finite")
    if gamma_aoi < 0 or gamma_change < 0:
        raise ValueError("VoI inputs must be non-negative")
    return tau_aoi * gamma_aoi + tau_change * gamma_change


def resize_map(m: SemanticMap, factor: int) -> SemanticMap:
    """Nearest-neighbor decimation by an integer factor that divides both dims.

    Keeps the top-left sample of each factor x factor block, so the output
    stays binary. Timestamp is preserved.
    """
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"factor must be an integer >= 1, got {factor}")
    factor = int(factor)
    if m.height % factor or m.width % factor:
        raise ValueError(
            f"factor {factor} must divide dimensions {m.height}x{m.width}"
        )
    return SemanticMap(mask=m.mask[::factor, ::factor], timestamp=m.timestamp)


@dataclass(frozen=True)
class Decision:
    """Outcome of offering one candidate map to the gate."""

    transmitted: bool
    voi: float
    gamma_aoi: float
    gamma_change: float


@dataclass
class VoISampler:
    """Threshold gate over a monotone stream of semantic maps.

    Constructed already primed with the first transmitted map (the change
    degree needs a cached copy to compare against; stream priming is the
    pipeline's responsibility). ``offer`` scores each candidate against the
    cache and replaces the cache only on transmit.
    """

    cached_map: SemanticMap
    threshold: float
    tau_aoi: float
    tau_change: float
    cached_time: int = field(init=False)

    def __post_init__(self) -> None:
        if self.threshold < 0 or not np.isfinite(self.threshold):
            raise ValueError(f"threshold must be finite and >= 0, got {self.threshold}")
        if self.tau_aoi < 0 or self.tau_change < 0:
            raise ValueError("tau weights must be >= 0")
        if self.tau_aoi + self.tau_change <= 0:
            raise ValueError("at least one tau weight must be positive")
        self.cached_time = self.cached_map.timestamp

    def offer(self, candidate: SemanticMap) -> Decision:
        """Score a candidate; transmit (and cache it) iff voi >= threshold."""
        if candidate.timestamp < self.cached_time:
            raise ValueError(
                f"out-of-order timestamp {candidate.timestamp} < cached {self.cached_time}"
            )
        gamma_aoi = aoi(candidate.timestamp, self.cached_time)
        gamma_change = change_degree(candidate, self.cached_map)
        score = voi(gamma_aoi, gamma_change, self.tau_aoi, self.tau_change)
        transmitted = score >= self.threshold
        if transmitted:
            self.cached_map = candidate
            self.cached_time = candidate.timestamp
        return Decision(
            transmitted=transmitted,
            voi=score,
            gamma_aoi=float(gamma_aoi),
            gamma_change=gamma_change,
        )
