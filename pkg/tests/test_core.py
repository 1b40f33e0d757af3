import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bzmarble.core import (
    DivergenceError,
    DomainError,
    IntegratorConfig,
    OregonatorParams,
    SimState,
    euler_step,
    integrate,
    laplacian5,
    reaction_rates,
    resting_state,
    steady_state,
)
from bzmarble.geometry import Mask, StimulusSite, make_disc_mask, stimulate
from oracles import reference_step

# roots of the cleared cubic (numpy.roots / brentq), frozen
U_STAR = {0.01: 0.003098314754500415, 0.05: 0.0021702726614564846, 0.07: 0.0021193981126440544}


def test_rates_at_u_equal_q():
    du, dv = reaction_rates(0.002, 0.0, OregonatorParams())
    assert du == pytest.approx((0.002 - 0.002**2) / 0.02, rel=1e-14)
    assert du == pytest.approx(0.0998, rel=1e-12)
    assert dv == pytest.approx(0.002)


def test_rates_at_origin():
    du, dv = reaction_rates(0.0, 0.0, OregonatorParams())
    assert du == pytest.approx(2.5, rel=1e-14)
    assert dv == 0.0


@pytest.mark.parametrize("phi", sorted(U_STAR))
def test_steady_state_matches_cubic_root(phi):
    p = OregonatorParams(phi=phi)
    u = steady_state(p)
    assert u == pytest.approx(U_STAR[phi], abs=1e-11)
    du, dv = reaction_rates(u, u, p)
    assert abs(du) < 1e-8 and dv == 0.0


def test_rates_reject_bad_input():
    p = OregonatorParams()
    with pytest.raises(DomainError):
        reaction_rates(float("nan"), 0.0, p)
    with pytest.raises(DomainError):
        reaction_rates(-p.q, 0.0, p)


@pytest.mark.parametrize("kw", [{"epsilon": 0}, {"q": -1}, {"phi": -0.1}, {"d_u": -1}, {"f": float("inf")}])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        OregonatorParams(**kw)


def test_laplacian_constant_field_is_zero():
    mask = make_disc_mask(6)
    lap = laplacian5(np.full(mask.shape, 0.37), mask, 0.25)
    assert np.all(lap == 0)


def test_laplacian_point_source():
    mask = make_disc_mask(6)
    f = np.zeros(mask.shape)
    f[6, 6] = 1.0
    lap = laplacian5(f, mask, 0.25)
    assert lap[6, 6] == -64.0
    for r, c in ((5, 6), (7, 6), (6, 5), (6, 7)):
        assert lap[r, c] == 16.0


def test_laplacian_edge_node_mirrors_centre():
    inside = np.zeros((5, 5), bool)
    inside[2, 1:4] = True  # horizontal bar: middle node has N and S masked out
    mask = Mask(inside, inside.copy())
    f = np.zeros((5, 5))
    f[2, 2] = 1.0
    assert laplacian5(f, mask, 0.25)[2, 2] == -32.0


@given(st.integers(2, 12), st.floats(0.01, 2.0))
def test_laplacian_sums_to_zero_on_domain(radius, scale):
    # discrete no-flux: the stencil is a symmetric graph Laplacian
    mask = make_disc_mask(radius)
    rng = np.random.default_rng(radius)
    f = np.where(mask.in_domain, rng.random(mask.shape) * scale, 0.0)
    total = laplacian5(f, mask, 0.25)[mask.in_domain].sum()
    assert abs(total) < 1e-9 * mask.in_domain.sum() * scale * 16


def test_zero_diffusion_single_step():
    mask = make_disc_mask(2)
    state = SimState(np.zeros(mask.shape), np.zeros(mask.shape), 0)
    out = euler_step(state, OregonatorParams(d_u=0.0), IntegratorConfig(), mask)
    assert out.u[2, 2] == pytest.approx(0.0025, rel=1e-14)
    assert out.v[2, 2] == 0.0
    assert out.iteration == 1
    assert state.iteration == 0 and state.u[2, 2] == 0.0


def test_rest_state_is_fixed():
    mask = make_disc_mask(10)
    params = OregonatorParams()
    state = resting_state(mask, params)
    out = integrate(state, params, IntegratorConfig(), mask, None, 200)
    assert np.max(np.abs(out.u - state.u)) < 1e-12
    assert np.max(np.abs(out.v - state.v)) < 1e-12


def test_n_steps_zero_returns_input():
    mask = make_disc_mask(3)
    state = resting_state(mask, OregonatorParams())
    assert integrate(state, OregonatorParams(), IntegratorConfig(), mask, None, 0) is state


def test_observer_strides():
    calls = []

    class Obs:
        stride = 150

        def __call__(self, s):
            calls.append(s.iteration)

    mask = make_disc_mask(3)
    params = OregonatorParams()
    integrate(resting_state(mask, params), params, IntegratorConfig(), mask, None, 450, [Obs()])
    assert calls == [150, 300, 450]


def _small_run(clamp):
    mask = make_disc_mask(10)
    params = OregonatorParams()
    state = resting_state(mask, params)
    rng = np.random.default_rng(7)
    state.v[mask.in_domain] += 0.05 * rng.random(mask.in_domain.sum())
    state = stimulate(state, StimulusSite((10, 18), 3), mask)
    cfg = IntegratorConfig(clamp_negative=clamp)
    return mask, params, cfg, state


@pytest.mark.parametrize("clamp", [False, True])
def test_matches_reference_stepper(clamp):
    mask, params, cfg, state = _small_run(clamp)
    assert mask.shape == (21, 21)
    u, v = state.u.tolist(), state.v.tolist()
    inside = mask.in_domain.tolist()
    for _ in range(100):
        u, v = reference_step(u, v, inside, params.phi, clamp=clamp)
    out = integrate(state, params, cfg, mask, None, 100)
    assert np.max(np.abs(out.u - np.array(u))) <= 1e-12
    assert np.max(np.abs(out.v - np.array(v))) <= 1e-12


def test_bitwise_determinism():
    mask, params, cfg, state = _small_run(True)
    a = integrate(state, params, cfg, mask, None, 300)
    b = integrate(state, params, cfg, mask, None, 300)
    assert a.u.tobytes() == b.u.tobytes() and a.v.tobytes() == b.v.tobytes()


def test_step_and_integrate_agree():
    mask, params, cfg, state = _small_run(True)
    s = state
    for _ in range(5):
        s = euler_step(s, params, cfg, mask)
    assert s.u.tobytes() == integrate(state, params, cfg, mask, None, 5).u.tobytes()


def test_divergence_reports_node():
    mask = make_disc_mask(4)
    params = OregonatorParams()
    state = resting_state(mask, params)
    state.u[4, 4] = 50.0
    with pytest.raises(DivergenceError) as info:
        integrate(state, params, IntegratorConfig(dt=0.05, clamp_negative=False), mask, None, 50)
    assert info.value.iteration >= 1
    assert not math.isfinite(info.value.value) or abs(info.value.value) > 1e3


def test_diffusion_only_conserves_mass():
    mask = make_disc_mask(12)
    rng = np.random.default_rng(1)
    u = np.where(mask.in_domain, rng.random(mask.shape), 0.0)
    state = SimState(u, np.zeros_like(u), 0)
    out = integrate(state, OregonatorParams(), IntegratorConfig(reaction=False), mask, None, 2000)
    assert abs(out.u[mask.in_domain].sum() / u[mask.in_domain].sum() - 1) < 1e-12


def test_held_nodes_reimposed():
    mask = make_disc_mask(10)
    params = OregonatorParams()
    site = StimulusSite((10, 10), 1, "held-source")
    state = stimulate(resting_state(mask, params), site, mask)
    out = integrate(state, params, IntegratorConfig(), mask, None, 50)
    assert out.held.tolist() == state.held.tolist()
    assert out.u[10, 10] > 0.5
