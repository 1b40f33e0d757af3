"""Two-variable Oregonator on a masked lattice, integrated with explicit Euler.

Fields are plain ``float64`` arrays of shape ``(height, width)`` in C
(row-major) order; row 0 is the northern edge and rows increase southward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Protocol

import numba
import numpy as np

from bzmarble._validation import check_field, check_same_shape

if TYPE_CHECKING:  # pragma: no cover
    from bzmarble.geometry import Mask
    from bzmarble.schedule import PhiSchedule


class DomainError(ValueError):
    """Raised when a reaction term is evaluated outside its domain."""


class DivergenceError(RuntimeError):
    """Raised when an Euler update leaves the configured safety bound."""

    def __init__(self, iteration: int, node: tuple[int, int], value: float):
        self.iteration = iteration
        self.node = node
        self.value = value
        super().__init__(
            f"integration diverged at iteration {iteration}, node (row={node[0]}, "
            f"col={node[1]}): value {value!r}"
        )


@dataclass(frozen=True)
class OregonatorParams:
    """Kinetic and transport constants of the reduced Oregonator."""

    epsilon: float = 0.02
    f: float = 1.4
    q: float = 0.002
    d_u: float = 1.0
    phi: float = 0.05

    def __post_init__(self):
        for name in ("epsilon", "f", "q", "d_u", "phi"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.epsilon <= 0 or self.q <= 0 or self.f <= 0:
            raise ValueError("epsilon, f and q must be positive")
        if self.d_u < 0 or self.phi < 0:
            raise ValueError("d_u and phi must be non-negative")

    def with_phi(self, phi: float) -> "OregonatorParams":
        return replace(self, phi=float(phi))


@dataclass(frozen=True)
class IntegratorConfig:
    """Explicit Euler settings.

    ``clamp_negative`` zeroes any activator value an update would push below
    zero. Without it the stiff ``(u - q)/(u + q)`` term lets a node in the
    refractory tail overshoot past ``u = -q`` at ``dt = 0.001`` and blow up.
    ``reaction=False`` integrates pure diffusion.
    """

    dt: float = 0.001
    dx: float = 0.25
    divergence_bound: float = 1e3
    clamp_negative: bool = True
    reaction: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not (self.dx > 0 and math.isfinite(self.dx)):
            raise ValueError(f"dx must be positive, got {self.dx!r}")
        if not self.divergence_bound > 0:
            raise ValueError("divergence_bound must be positive")


@dataclass
class SimState:
    """Activator ``u``, inhibitor ``v`` and the step counter.

    ``held`` lists flat (row-major) node indices clamped to ``u = 1`` before
    every step by :func:`integrate`.
    """

    u: np.ndarray
    v: np.ndarray
    iteration: int = 0
    held: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        self.u = check_field(self.u, "u")
        self.v = check_field(self.v, "v")
        check_same_shape(self.u, self.v)
        self.held = np.asarray(self.held, dtype=np.int64)

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def sim_time(self, dt: float) -> float:
        return self.iteration * dt

    def copy(self) -> "SimState":
        return SimState(self.u.copy(), self.v.copy(), self.iteration, self.held.copy())


class Observer(Protocol):
    stride: int

    def __call__(self, state: SimState) -> None: ...


def reaction_rates(u, v, params: OregonatorParams):
    """Local Oregonator kinetics (no diffusion).

    Works on scalars or arrays. Returns ``(du_dt, dv_dt)``.
    """
    u_arr = np.asarray(u, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    if not (np.all(np.isfinite(u_arr)) and np.all(np.isfinite(v_arr))):
        raise DomainError("reaction_rates requires finite u and v")
    denom = u_arr + params.q
    if np.any(denom == 0):
        raise DomainError("u + q must be non-zero")
    du = (u_arr - u_arr * u_arr - (params.f * v_arr + params.phi) * (u_arr - params.q) / denom) / params.epsilon
    dv = u_arr - v_arr
    if np.ndim(du) == 0:
        return float(du), float(dv)
    return du, dv


def steady_state(params: OregonatorParams, lo: float = 0.0, hi: float = 0.1, tol: float = 1e-12) -> float:
    """Homogeneous rest value ``u* = v*`` found by bisection on ``(lo, hi)``."""

    def g(u):
        return u - u * u - (params.f * u + params.phi) * (u - params.q) / (u + params.q)

    g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0:
        return lo
    if g_hi == 0:
        return hi
    if g_lo * g_hi > 0:
        raise ValueError(f"steady state not bracketed by ({lo}, {hi}) for phi={params.phi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if g_mid == 0:
            return mid
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def resting_state(mask: "Mask", params: OregonatorParams) -> SimState:
    """Uniform rest state on the domain, zeros outside it."""
    u_star = steady_state(params)
    u = np.where(mask.in_domain, u_star, 0.0)
    return SimState(u, u.copy(), 0)


def laplacian5(field: np.ndarray, mask: "Mask", dx: float) -> np.ndarray:
    """Five-point Laplacian with a no-flux (mirrored) mask boundary.

    A neighbour outside the lattice or the domain takes the centre value.
    Nodes outside the domain get 0.
    """
    field = check_field(field, "field")
    inside = mask.in_domain
    if field.shape != inside.shape:
        raise ValueError(f"field shape {field.shape} does not match mask {inside.shape}")

    pad_f = np.pad(field, 1)
    pad_m = np.pad(inside, 1)

    def neighbour(dr, dc):
        sl = (slice(1 + dr, pad_f.shape[0] - 1 + dr), slice(1 + dc, pad_f.shape[1] - 1 + dc))
        return np.where(pad_m[sl], pad_f[sl], field)

    north, south = neighbour(-1, 0), neighbour(1, 0)
    west, east = neighbour(0, -1), neighbour(0, 1)
    lap = ((north + south) + (west + east) - 4.0 * field) / (dx * dx)
    return np.where(inside, lap, 0.0)


@numba.njit(cache=True)
def _euler_kernel(u, v, u_out, v_out, inside, reactive, phi, eps, f, q, d_u, dt, inv_dx2, clamp, bound):
    height, width = u.shape
    bad = -1
    for i in range(height):
        for j in range(width):
            if not inside[i, j]:
                u_out[i, j] = u[i, j]
                v_out[i, j] = v[i, j]
                continue
            c = u[i, j]
            n = u[i - 1, j] if i > 0 and inside[i - 1, j] else c
            s = u[i + 1, j] if i < height - 1 and inside[i + 1, j] else c
            w = u[i, j - 1] if j > 0 and inside[i, j - 1] else c
            e = u[i, j + 1] if j < width - 1 and inside[i, j + 1] else c
            # (n + s) + (w + e) keeps the update bit-identical under a left-right mirror
            lap = ((n + s) + (w + e) - 4.0 * c) * inv_dx2
            if reactive[i, j]:
                vc = v[i, j]
                du = (c - c * c - (f * vc + phi) * (c - q) / (c + q)) / eps
                dv = c - vc
            else:
                du = 0.0
                dv = 0.0
            un = c + dt * (du + d_u * lap)
            vn = v[i, j] + dt * dv
            if clamp and un < 0.0:
                un = 0.0
            u_out[i, j] = un
            v_out[i, j] = vn
            if bad < 0 and not (abs(un) <= bound and abs(vn) <= bound):
                bad = i * width + j
    return bad


class _Stepper:
    """Double-buffered Euler stepping shared by :func:`euler_step` and :func:`integrate`."""

    def __init__(self, state: SimState, params: OregonatorParams, cfg: IntegratorConfig, mask: "Mask"):
        if state.shape != mask.shape:
            raise ValueError(f"state shape {state.shape} does not match mask {mask.shape}")
        self.params = params
        self.cfg = cfg
        self.inside = mask.in_domain
        reactive = mask.excitable if cfg.reaction else np.zeros_like(mask.excitable)
        self.reactive = np.ascontiguousarray(reactive)
        self.u = np.array(state.u, dtype=np.float64, order="C")
        self.v = np.array(state.v, dtype=np.float64, order="C")
        self.u_next = np.empty_like(self.u)
        self.v_next = np.empty_like(self.v)
        self.iteration = state.iteration
        self.held = state.held
        self.inv_dx2 = 1.0 / (cfg.dx * cfg.dx)

    def step(self, phi: float) -> None:
        if self.held.size:
            self.u.reshape(-1)[self.held] = 1.0
        p, cfg = self.params, self.cfg
        bad = _euler_kernel(
            self.u, self.v, self.u_next, self.v_next, self.inside, self.reactive,
            float(phi), p.epsilon, p.f, p.q, p.d_u, cfg.dt, self.inv_dx2,
            cfg.clamp_negative, cfg.divergence_bound,
        )
        if bad >= 0:
            row, col = divmod(int(bad), self.u.shape[1])
            value = self.u_next[row, col]
            if abs(value) <= cfg.divergence_bound:
                value = self.v_next[row, col]
            raise DivergenceError(self.iteration + 1, (row, col), float(value))
        self.u, self.u_next = self.u_next, self.u
        self.v, self.v_next = self.v_next, self.v
        self.iteration += 1

    def view(self) -> SimState:
        # shares buffers: observers must copy anything they keep
        state = SimState.__new__(SimState)
        state.u, state.v, state.iteration, state.held = self.u, self.v, self.iteration, self.held
        return state

    def result(self) -> SimState:
        return SimState(self.u.copy(), self.v.copy(), self.iteration, self.held.copy())


def euler_step(state: SimState, params: OregonatorParams, cfg: IntegratorConfig, mask: "Mask") -> SimState:
    """Advance one explicit Euler step at ``params.phi``; the input is not modified."""
    stepper = _Stepper(state, params, cfg, mask)
    stepper.step(params.phi)
    return stepper.result()


def integrate(
    state: SimState,
    params: OregonatorParams,
    cfg: IntegratorConfig,
    mask: "Mask",
    schedule: "PhiSchedule | None" = None,
    n_steps: int = 0,
    observers: Iterable[Observer] = (),
) -> SimState:
    """Run ``n_steps`` Euler steps.

    ``phi`` for the step leaving iteration ``k`` comes from
    ``schedule.phi_at(k)`` (or ``params.phi`` without a schedule). Each
    observer is called with the live state whenever the iteration count
    becomes a multiple of its ``stride``.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if n_steps == 0:
        return state
    observers = list(observers)
    for obs in observers:
        if obs.stride < 1:
            raise ValueError("observer stride must be >= 1")
    stepper = _Stepper(state, params, cfg, mask)
    for _ in range(n_steps):
        phi = params.phi if schedule is None else schedule.phi_at(stepper.iteration)
        stepper.step(phi)
        k = stepper.iteration
        for obs in observers:
            if k % obs.stride == 0:
                obs(stepper.view())
    return stepper.result()
