"""Virtual electrodes: potential = sum of u over ``e2`` minus sum over ``e1``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from bzmarble.core import SimState
from bzmarble.geometry import Mask, RectDomain


@dataclass(frozen=True)
class ElectrodePair:
    e1: RectDomain
    e2: RectDomain

    def __post_init__(self):
        if self.e1.overlaps(self.e2):
            raise ValueError("electrode rectangles must be disjoint")

    def swapped(self) -> "ElectrodePair":
        return ElectrodePair(self.e2, self.e1)

    def mirrored(self, width: int) -> "ElectrodePair":
        return ElectrodePair(self.e1.mirrored(width), self.e2.mirrored(width))

    def validate(self, mask: Mask) -> None:
        for name, rect in (("e1", self.e1), ("e2", self.e2)):
            if not rect.within(mask):
                raise ValueError(f"electrode {name} {rect} exceeds lattice bounds {mask.shape}")
            if rect.node_count(mask) == 0:
                raise ValueError(f"electrode {name} {rect} lies entirely outside the domain")


def _rect_sum(u: np.ndarray, rect: RectDomain, mask: Mask) -> float:
    # Within each row, columns are added in mirror pairs (first+last, ...),
    # then rows top to bottom; the result is bitwise invariant under a
    # left-right reflection of the rectangle contents.
    block = u[rect.slices] * mask.in_domain[rect.slices]
    width = block.shape[1]
    half = width // 2
    paired = block[:, :half] + block[:, ::-1][:, :half]
    row_sums = np.zeros(block.shape[0])
    for k in range(half):
        row_sums += paired[:, k]
    if width % 2:
        row_sums += block[:, half]
    total = 0.0
    for s in row_sums:
        total += s
    return float(total)


def measure_potential(state: SimState | np.ndarray, electrodes: ElectrodePair, mask: Mask) -> float:
    """Potential difference for one state (or a bare ``u`` field)."""
    u = state.u if isinstance(state, SimState) else np.asarray(state, dtype=float)
    if u.shape != mask.shape:
        raise ValueError(f"field shape {u.shape} does not match mask {mask.shape}")
    electrodes.validate(mask)
    return _rect_sum(u, electrodes.e2, mask) - _rect_sum(u, electrodes.e1, mask)


@dataclass
class PotentialTrace:
    """Potential samples taken every ``record_stride`` iterations.

    Sample ``k`` was taken at model time ``(k + offset) * record_stride * dt``;
    ``offset`` is 1 for traces recorded from iteration 0 onwards by
    :class:`PotentialRecorder`, whose first sample follows the first stride.
    """

    record_stride: int
    dt: float
    samples: list[float] = field(default_factory=list)
    offset: int = 0

    def __len__(self):
        return len(self.samples)

    @property
    def sample_spacing(self) -> float:
        return self.record_stride * self.dt

    @property
    def times(self) -> np.ndarray:
        return (np.arange(len(self.samples)) + self.offset) * self.sample_spacing

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.samples, dtype=float)

    def window(self, start: int, stop: int | None = None) -> "PotentialTrace":
        """Sub-trace of samples ``start:stop`` keeping absolute timing."""
        return PotentialTrace(self.record_stride, self.dt, list(self.samples[start:stop]), self.offset + start)


def record(trace: PotentialTrace, state: SimState, electrodes: ElectrodePair, mask: Mask) -> PotentialTrace:
    """Append the current potential to ``trace`` and return it."""
    trace.samples.append(measure_potential(state, electrodes, mask))
    return trace


class PotentialRecorder:
    """Observer that records the electrode potential at a fixed stride."""

    def __init__(self, electrodes: ElectrodePair, mask: Mask, stride: int, dt: float, start_iteration: int = 0):
        electrodes.validate(mask)
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.electrodes = electrodes
        self.mask = mask
        self.stride = int(stride)
        self.iterations: list[int] = []
        self.trace = PotentialTrace(self.stride, dt, [], start_iteration // self.stride + 1)

    def __call__(self, state: SimState) -> None:
        record(self.trace, state, self.electrodes, self.mask)
        self.iterations.append(state.iteration)
