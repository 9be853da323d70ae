"""Piecewise-polynomial data-mass densities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disclosure_eq import (
    MassDensity,
    Piece,
    density_from_config,
    double_peaked,
    triangular,
    triangular_window,
)


# ---------------------------------------------------------------------------
# Piece


def test_piece_evaluation_and_integral():
    p = Piece(0.0, 1.0, (1.0, 2.0, 3.0))  # 1 + 2x + 3x^2
    assert p(0.5) == pytest.approx(1 + 1 + 0.75)
    assert p.integral(0.0, 1.0) == pytest.approx(1 + 1 + 1)
    assert p.derivative_at(0.5) == pytest.approx(2 + 3.0)
    assert p.derivative_at(0.5, order=2) == pytest.approx(6.0)
    assert p.min_on_interval() == pytest.approx(1.0)


def test_piece_min_finds_interior_vertex():
    p = Piece(0.0, 1.0, (1.0, -2.0, 1.0))  # (x-1)^2, min 0 at x=1
    assert p.min_on_interval() == pytest.approx(0.0, abs=1e-12)
    q = Piece(0.0, 0.5, (1.0, -2.0, 1.0))  # same parabola, clipped
    assert q.min_on_interval() == pytest.approx(0.25)


def test_piece_rejects_bad_shapes():
    with pytest.raises(ValueError):
        Piece(0.5, 0.5, (1.0,))
    with pytest.raises(ValueError):
        Piece(0.0, 1.0, (1.0, 0.0, 0.0, 0.0, 5.0))  # degree 4


# ---------------------------------------------------------------------------
# Built-in families


@pytest.mark.parametrize("dens", [triangular(), double_peaked(),
                                  triangular_window(0.5),
                                  triangular_window(1.0)])
def test_family_is_a_probability_density(dens):
    lo = dens.support[0]
    assert dens.support[1] == 1.0
    assert dens(1.0) == pytest.approx(0.0, abs=1e-12)
    assert dens.cdf(1.0) == pytest.approx(1.0, abs=1e-9)
    assert dens.cdf(lo) == pytest.approx(0.0, abs=1e-12)
    xs = np.linspace(lo, 1.0, 301)
    assert all(dens(x) >= -1e-12 for x in xs)
    cdf = [dens.cdf(x) for x in xs]
    assert all(b >= a - 1e-12 for a, b in zip(cdf, cdf[1:]))


def test_triangular_shape():
    g = triangular()
    assert g(0.5) == pytest.approx(2.0)
    assert g(0.25) == pytest.approx(1.0)
    assert g.cdf(0.5) == pytest.approx(0.5)
    assert g.mean() == pytest.approx(0.5)
    assert g.variance() == pytest.approx(1.0 / 24.0)


def test_double_peaked_shape():
    g = double_peaked()
    assert g(0.25) == pytest.approx(2.0)
    assert g(0.75) == pytest.approx(2.0)
    assert g(0.0) == pytest.approx(0.0)
    assert g(0.5) == pytest.approx(0.0)
    assert g.cdf(0.5) == pytest.approx(0.5)
    assert g.mean() == pytest.approx(0.5)


@pytest.mark.parametrize("w", [1.0, 0.5, 0.25, 0.125])
def test_triangular_window_shape(w):
    g = triangular_window(w)
    assert g.support[0] == pytest.approx(1.0 - w)
    assert g(1.0 - w / 2) == pytest.approx(2.0 / w)
    assert g(1.0 - w) == pytest.approx(0.0, abs=1e-9)
    assert g.mean() == pytest.approx(1.0 - w / 2)


def test_triangular_window_rejects_bad_width():
    with pytest.raises(ValueError):
        triangular_window(0.0)
    with pytest.raises(ValueError):
        triangular_window(1.5)


# ---------------------------------------------------------------------------
# MassDensity validation


def p_tri():
    return [Piece(0.0, 0.5, (0.0, 4.0)), Piece(0.5, 1.0, (4.0, -4.0))]


def test_density_rejects_gap_in_support():
    pieces = [Piece(0.0, 0.4, (0.0, 4.0)), Piece(0.5, 1.0, (4.0, -4.0))]
    with pytest.raises(ValueError, match="contiguous|gap|start"):
        MassDensity(pieces)


def test_density_rejects_discontinuity():
    pieces = [Piece(0.0, 0.5, (0.0, 2.0)), Piece(0.5, 1.0, (4.0, -4.0))]
    with pytest.raises(ValueError, match="discontinuous"):
        MassDensity(pieces)


def test_density_rejects_positive_right_endpoint():
    with pytest.raises(ValueError, match="vanish"):
        MassDensity([Piece(0.0, 1.0, (1.0,))])


def test_density_rejects_short_support():
    with pytest.raises(ValueError, match="x = 1"):
        MassDensity([Piece(0.0, 0.5, (0.0, 4.0, -8.0))])


def test_density_rejects_negative_values():
    # continuous (both 3 at x=0.5), vanishes at 1, total mass 1, but the
    # second parabola dips below zero on (0.75, 1)
    pieces = [Piece(0.0, 0.5, (0.0, 6.0)),
              Piece(0.5, 1.0, (18.0, -42.0, 24.0))]
    with pytest.raises(ValueError, match="negative"):
        MassDensity(pieces)


def test_density_rejects_wrong_total_mass():
    pieces = [Piece(0.0, 0.5, (0.0, 2.0)), Piece(0.5, 1.0, (2.0, -2.0))]
    with pytest.raises(ValueError, match="mass"):
        MassDensity(pieces)


# ---------------------------------------------------------------------------
# Calculus helpers used by the continuum solver


def test_left_derivative_and_taylor():
    g = triangular()
    assert g.left_derivative(0.5) == pytest.approx(4.0)
    assert g.left_derivative(0.75) == pytest.approx(-4.0)
    t = g.taylor(0.75)
    # value, then scaled derivatives of the left piece
    assert t[0] == pytest.approx(1.0)
    assert t[1] == pytest.approx(-4.0)


def test_scaled_pieces_preserve_values():
    g = triangular()
    c = 1.5
    scaled = g.scaled_pieces(c)
    for x in (0.05, 0.2, 0.3, 0.5, 0.6):
        val = sum(p(x) for p in scaled if p.lo - 1e-12 <= x <= p.hi + 1e-12)
        n_cover = sum(1 for p in scaled if p.lo - 1e-12 <= x <= p.hi + 1e-12)
        assert val / n_cover == pytest.approx(g(c * x))


def test_to_config_roundtrip():
    g = double_peaked()
    h = density_from_config(g.to_config())
    for x in np.linspace(0, 1, 101):
        assert h(x) == pytest.approx(g(x), abs=1e-12)


# ---------------------------------------------------------------------------
# density_from_config


def test_density_from_config_names():
    assert density_from_config("triangular")(0.5) == pytest.approx(2.0)
    assert density_from_config({"family": "double_peaked"})(0.25) == (
        pytest.approx(2.0))
    g = density_from_config({"family": "triangular_window", "width": 0.25})
    assert g.support[0] == pytest.approx(0.75)


def test_density_from_config_rejects_unknowns():
    with pytest.raises(ValueError, match="unknown density family"):
        density_from_config("gaussian")
    with pytest.raises(ValueError, match="unknown density family"):
        density_from_config({"family": "gaussian"})
    with pytest.raises(ValueError, match="name or a dict"):
        density_from_config(42)


def test_density_from_config_checks_declared_support():
    cfg = triangular().to_config()
    cfg["support"] = [0.25, 1.0]
    with pytest.raises(ValueError, match="support"):
        density_from_config(cfg)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 1.0))
def test_window_width_sweep(w):
    g = triangular_window(w)
    assert g.cdf(1.0) == pytest.approx(1.0, abs=1e-9)
    assert g(1.0) == pytest.approx(0.0, abs=1e-9)
    # mean is near 1 for narrow windows, so E[x^2] - mean^2 cancels hard;
    # only a loose relative check is meaningful there
    assert g.variance() == pytest.approx(w * w / 24.0, rel=1e-4, abs=1e-12)
