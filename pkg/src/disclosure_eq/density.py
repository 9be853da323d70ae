"""Piecewise-polynomial densities on [a, 1] for the continuum-data model.

A density is a list of polynomial pieces on contiguous intervals. Pieces are
stored with ascending global-x coefficients (degree <= 3). The class exposes
exact evaluation, the cumulative G, one-sided derivatives, and the support
breakpoints that drive event detection in the limit solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Piece",
    "MassDensity",
    "triangular",
    "double_peaked",
    "triangular_window",
]

_CONTINUITY_TOL = 1e-10
_MASS_TOL = 1e-10
MAX_DEGREE = 3


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    coeffs: tuple[float, ...]  # ascending powers of global x

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"piece interval [{self.lo}, {self.hi}] is empty")
        if len(self.coeffs) > MAX_DEGREE + 1:
            raise ValueError("piece degree exceeds 3")

    def __call__(self, x: float) -> float:
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def integral(self, lo: float, hi: float) -> float:
        anti = [c / (k + 1) for k, c in enumerate(self.coeffs)]

        def ev(x: float) -> float:
            acc = 0.0
            for c in reversed(anti):
                acc = acc * x + c
            return acc * x

        return ev(hi) - ev(lo)

    def derivative_at(self, x: float, order: int = 1) -> float:
        cs = list(self.coeffs)
        for _ in range(order):
            cs = [k * c for k, c in enumerate(cs)][1:]
            if not cs:
                return 0.0
        acc = 0.0
        for c in reversed(cs):
            acc = acc * x + c
        return acc

    def min_on_interval(self) -> float:
        """Exact minimum of the polynomial over [lo, hi]."""
        cand = [self(self.lo), self(self.hi)]
        deriv = [k * c for k, c in enumerate(self.coeffs)][1:]
        if any(abs(c) > 0 for c in deriv):
            roots = np.roots(list(reversed(deriv)))
            for r in roots:
                if abs(r.imag) < 1e-12 and self.lo < r.real < self.hi:
                    cand.append(self(float(r.real)))
        return min(cand)


class MassDensity:
    """Data-mass density g on [a, 1] with g(1) = 0 and total mass 1.

    Pieces must tile [a, 1] contiguously; continuity is required at interior
    breakpoints (the model needs a continuous g). The lower end a may be 0.
    """

    def __init__(self, pieces: list[Piece] | tuple[Piece, ...]):
        pieces = sorted(pieces, key=lambda p: p.lo)
        if not pieces:
            raise ValueError("density needs at least one piece")
        for left, right in zip(pieces, pieces[1:]):
            if abs(left.hi - right.lo) > _CONTINUITY_TOL:
                raise ValueError(
                    f"pieces not contiguous at {left.hi} vs {right.lo}")
            if abs(left(left.hi) - right(right.lo)) > 1e-8:
                raise ValueError(f"density discontinuous at x={left.hi}")
        if abs(pieces[-1].hi - 1.0) > _CONTINUITY_TOL:
            raise ValueError("support must extend to x = 1")
        if abs(pieces[-1](1.0)) > 1e-8:
            raise ValueError("density must vanish at x = 1")
        for p in pieces:
            if p.min_on_interval() < -1e-9:
                raise ValueError(f"density negative on [{p.lo}, {p.hi}]")
        total = sum(p.integral(p.lo, p.hi) for p in pieces)
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"density mass {total} != 1")
        self.pieces = tuple(pieces)
        self.support = (pieces[0].lo, 1.0)
        # cumulative mass up to each piece start, for O(log) G evaluation
        cum = [0.0]
        for p in pieces:
            cum.append(cum[-1] + p.integral(p.lo, p.hi))
        self._cum = cum
        self._los = [p.lo for p in pieces]

    # -- evaluation ---------------------------------------------------------

    def _piece_index(self, x: float, side: str = "right") -> int | None:
        if x < self.support[0] or x > self.support[1]:
            return None
        import bisect
        if side == "left":
            i = bisect.bisect_left(self._los, x) - 1
        else:
            i = bisect.bisect_right(self._los, x) - 1
        if i < 0:
            i = 0
        if i >= len(self.pieces):
            i = len(self.pieces) - 1
        return i

    def __call__(self, x: float) -> float:
        if x < self.support[0] or x > self.support[1]:
            return 0.0
        i = self._piece_index(x)
        return max(self.pieces[i](x), 0.0)

    def cdf(self, x: float) -> float:
        """Cumulative mass G(x) = integral of g up to x."""
        if x <= self.support[0]:
            return 0.0
        if x >= 1.0:
            return 1.0
        i = self._piece_index(x)
        p = self.pieces[i]
        return self._cum[i] + p.integral(p.lo, x)

    def left_derivative(self, x: float, order: int = 1) -> float:
        """One-sided derivative from the left, 0 outside the support."""
        if x <= self.support[0] or x > 1.0:
            return 0.0
        i = self._piece_index(x, side="left")
        return self.pieces[i].derivative_at(x, order)

    def taylor(self, x: float, side: str = "left") -> tuple[float, ...]:
        """Local Taylor coefficients (g(x), g'(x)/1!, ..., g'''(x)/3!) of the
        one-sided polynomial piece at x; all zeros outside the support.

        ``side`` selects which piece supplies the expansion at a breakpoint:
        "left" uses the piece ending at x, "right" the piece starting at x.
        """
        if side == "left":
            if x <= self.support[0] or x > 1.0:
                return (0.0, 0.0, 0.0, 0.0)
        else:
            if x < self.support[0] or x >= 1.0:
                return (0.0, 0.0, 0.0, 0.0)
        p = self.pieces[self._piece_index(x, side=side)]
        return (p(x), p.derivative_at(x, 1),
                p.derivative_at(x, 2) / 2.0, p.derivative_at(x, 3) / 6.0)

    def mean(self) -> float:
        return sum(
            Piece(p.lo, p.hi, (0.0, *p.coeffs)).integral(p.lo, p.hi)
            for p in self.pieces)

    def variance(self) -> float:
        m = self.mean()
        second = sum(
            Piece(p.lo, p.hi, (0.0, 0.0, *p.coeffs)).integral(p.lo, p.hi)
            for p in self.pieces)
        return second - m * m

    @property
    def breakpoints(self) -> list[float]:
        return [p.lo for p in self.pieces] + [1.0]

    # -- composition helpers for the limit solver ---------------------------

    def scaled_pieces(self, c: float) -> list[Piece]:
        """Pieces of x -> g(c*x) on [lo/c, hi/c], exact coefficients."""
        if c <= 0:
            raise ValueError("scale must be positive")
        out = []
        for p in self.pieces:
            coeffs = tuple(coef * c ** k for k, coef in enumerate(p.coeffs))
            out.append(Piece(p.lo / c, p.hi / c, coeffs))
        return out

    def to_config(self) -> dict:
        return {
            "support": [self.support[0], 1.0],
            "pieces": [
                {"interval": [p.lo, p.hi], "coeffs": list(p.coeffs)}
                for p in self.pieces
            ],
        }


def triangular() -> MassDensity:
    """Symmetric triangle on [0,1]: 2 - 4|x - 1/2|."""
    return MassDensity([
        Piece(0.0, 0.5, (0.0, 4.0)),
        Piece(0.5, 1.0, (4.0, -4.0)),
    ])


def double_peaked() -> MassDensity:
    """Two triangles peaking at 1/4 and 3/4, vanishing at 0, 1/2 and 1."""
    return MassDensity([
        Piece(0.0, 0.25, (0.0, 8.0)),
        Piece(0.25, 0.5, (4.0, -8.0)),
        Piece(0.5, 0.75, (-4.0, 8.0)),
        Piece(0.75, 1.0, (8.0, -8.0)),
    ])


def triangular_window(width: float) -> MassDensity:
    """Symmetric triangle with the given width and right edge pinned at 1.

    Used by the variance-shrink ladder: support [1-w, 1], peak at 1 - w/2,
    height 2/w, so mass stays 1 and g(1) = 0 for every width.
    """
    if not 0 < width <= 1:
        raise ValueError("width must lie in (0, 1]")
    a = 1.0 - width
    mid = 1.0 - width / 2
    s = 4.0 / width ** 2  # rising/falling slope magnitude
    return MassDensity([
        Piece(a, mid, (-a * s, s)),
        Piece(mid, 1.0, (s, -s)),
    ])


_FAMILIES = {
    "triangular": triangular,
    "double_peaked": double_peaked,
}


def density_from_config(cfg) -> MassDensity:
    """Build a density from a config fragment: named family or explicit pieces."""
    if isinstance(cfg, str):
        name = cfg
        if name not in _FAMILIES:
            raise ValueError(f"unknown density family {name!r}")
        return _FAMILIES[name]()
    if isinstance(cfg, dict):
        if "family" in cfg:
            name = cfg["family"]
            if name == "triangular_window":
                return triangular_window(float(cfg["width"]))
            if name not in _FAMILIES:
                raise ValueError(f"unknown density family {name!r}")
            return _FAMILIES[name]()
        pieces = [
            Piece(float(p["interval"][0]), float(p["interval"][1]),
                  tuple(float(c) for c in p["coeffs"]))
            for p in cfg["pieces"]
        ]
        dens = MassDensity(pieces)
        if "support" in cfg:
            lo, hi = cfg["support"]
            if abs(dens.support[0] - lo) > 1e-9 or abs(hi - 1.0) > 1e-9:
                raise ValueError("declared support does not match pieces")
        return dens
    raise ValueError("density config must be a name or a dict")
