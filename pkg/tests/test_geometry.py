import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bzmarble.core import OregonatorParams, resting_state
from bzmarble.geometry import (
    RectDomain,
    StimulusMode,
    StimulusSite,
    default_electrodes,
    edge_site,
    make_annulus_mask,
    make_disc_mask,
    stimulate,
)
from oracles import disc_points

# brute-force point-in-circle counts, frozen
DISC_COUNTS = {1: 5, 5: 81, 50: 7845, 185: 107501}


@pytest.mark.parametrize("radius", sorted(DISC_COUNTS))
def test_disc_counts(radius):
    mask = make_disc_mask(radius)
    assert mask.in_domain.sum() == DISC_COUNTS[radius]
    assert mask.shape == (2 * radius + 1, 2 * radius + 1)


@pytest.mark.parametrize("radius", [1, 5, 17])
def test_disc_matches_enumeration(radius):
    mask = make_disc_mask(radius)
    expected = np.zeros(mask.shape, bool)
    for x, y in disc_points(radius):
        expected[radius + y, radius + x] = True
    assert np.array_equal(mask.in_domain, expected)
    assert np.array_equal(mask.excitable, expected)


def test_disc_rotation_symmetry():
    mask = make_disc_mask(185)
    assert np.array_equal(np.rot90(mask.in_domain), mask.in_domain)


def test_annulus_counts():
    mask = make_annulus_mask(185, 150)
    assert mask.in_domain.sum() == 107501
    assert mask.excitable.sum() == 107501 - 70681
    assert mask.in_domain[185, 185] and not mask.excitable[185, 185]


@pytest.mark.parametrize("inner", [0, -3, 185, 200])
def test_annulus_rejects_bad_inner(inner):
    with pytest.raises(ValueError):
        make_annulus_mask(185, inner)


def test_disc_rejects_bad_radius():
    with pytest.raises(ValueError):
        make_disc_mask(0)


def test_mask_is_read_only():
    mask = make_disc_mask(3)
    with pytest.raises(ValueError):
        mask.in_domain[0, 0] = True


@pytest.mark.parametrize("compass,center", [("S", (185, 368)), ("E", (368, 185)), ("N", (185, 2)), ("W", (2, 185))])
def test_edge_sites(compass, center):
    assert edge_site(make_disc_mask(185), compass).center == center


def test_ne_site_near_bearing():
    mask = make_disc_mask(185)
    x, y = edge_site(mask, "NE").center
    assert x - 185 == pytest.approx(185 - y, abs=1)
    assert np.hypot(x - 185, y - 185) == pytest.approx(183, abs=1)


def test_one_shot_changes_site_nodes_only():
    mask = make_disc_mask(185)
    state = resting_state(mask, OregonatorParams())
    site = edge_site(mask, "S")
    out = stimulate(state, site, mask)
    changed = out.u != state.u
    assert changed.sum() == site.nodes(mask).sum() == np.count_nonzero(out.u == 1.0)
    assert out.held.size == 0
    assert np.array_equal(stimulate(out, site, mask).u, out.u)


def test_held_site_registered():
    mask = make_disc_mask(20)
    site = StimulusSite((20, 20), 2, StimulusMode.HELD)
    out = stimulate(resting_state(mask, OregonatorParams()), site, mask)
    assert out.held.size == site.nodes(mask).sum() == 13


def test_site_outside_domain_rejected():
    mask = make_disc_mask(10)
    with pytest.raises(ValueError):
        stimulate(resting_state(mask, OregonatorParams()), StimulusSite((0, 0), 1), mask)


def test_default_electrodes_are_mirror_images():
    mask = make_disc_mask(185)
    west, east = default_electrodes(mask)
    assert east == RectDomain(205, 145, 210, 184)
    assert west == east.mirrored(mask.width) == RectDomain(160, 145, 165, 184)
    assert west.node_count(mask) == east.node_count(mask) == 240


@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 10), st.integers(0, 10))
def test_rect_mirror_is_involution(x0, y0, w, h):
    r = RectDomain(x0, y0, x0 + w, y0 + h)
    assert r.mirrored(61).mirrored(61) == r


def test_mask_mirror():
    mask = make_annulus_mask(30, 10)
    assert mask.mirrored() == mask  # symmetric shapes are fixed points
    site = edge_site(mask, "E")
    assert site.mirrored(mask.width).center == edge_site(mask, "W").center
