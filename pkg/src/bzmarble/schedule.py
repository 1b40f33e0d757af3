"""Excitability programs: phi as a function of the iteration count."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class Segment:
    start: int
    phi: float
    ramp: bool = False  # interpolate linearly towards the next segment's phi


@dataclass(frozen=True)
class PhiSchedule:
    """Piecewise phi program.

    Segment ``k`` covers iterations ``[start_k, start_{k+1})``; the last one
    runs forever. A segment with ``ramp=True`` moves linearly from its own
    phi to the next segment's phi over its span.
    """

    segments: tuple[Segment, ...]
    stop: int | None = None  # iteration where the program ends, if any

    def __post_init__(self):
        segs = tuple(s if isinstance(s, Segment) else Segment(*s) for s in self.segments)
        if not segs:
            raise ValueError("a schedule needs at least one segment")
        if segs[0].start != 0:
            raise ValueError("the first segment must start at iteration 0")
        for a, b in zip(segs, segs[1:]):
            if b.start <= a.start:
                raise ValueError("segment starts must be strictly increasing")
        for s in segs:
            if not (math.isfinite(s.phi) and s.phi >= 0):
                raise ValueError(f"phi must be finite and >= 0, got {s.phi!r}")
        if self.stop is not None and self.stop <= segs[-1].start:
            raise ValueError("stop must come after the last segment start")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "_starts", [s.start for s in segs])

    @classmethod
    def constant(cls, phi: float) -> "PhiSchedule":
        return cls((Segment(0, float(phi)),))

    @classmethod
    def steps(cls, pairs: Sequence[tuple[int, float]], stop: int | None = None) -> "PhiSchedule":
        return cls(tuple(Segment(int(s), float(p)) for s, p in pairs), stop)

    def phi_at(self, iteration: int) -> float:
        k = bisect.bisect_right(self._starts, iteration) - 1
        seg = self.segments[k]
        if not seg.ramp or k + 1 == len(self.segments):
            return seg.phi
        nxt = self.segments[k + 1]
        frac = (iteration - seg.start) / (nxt.start - seg.start)
        return seg.phi + frac * (nxt.phi - seg.phi)

    def boundaries(self, n_steps: int) -> list[tuple[int, int]]:
        """``(start, stop)`` iteration spans of each segment, clipped to ``n_steps``."""
        spans = []
        for k, seg in enumerate(self.segments):
            stop = self.segments[k + 1].start if k + 1 < len(self.segments) else n_steps
            if seg.start < n_steps:
                spans.append((seg.start, min(stop, n_steps)))
        return spans

    def to_pairs(self) -> list[list]:
        return [[s.start, s.phi, s.ramp] for s in self.segments]
