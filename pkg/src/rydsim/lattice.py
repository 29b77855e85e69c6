"""Array geometries, displacement classes, and shortest-path counting.

Conventions used throughout the package:

* Lattice coordinates ``(k, l)`` are integers.  For the chain only ``k``
  is used.  For the square lattice the embedding is ``(k*a, l*a)``; for
  the triangular lattice the primitive vectors are ``a1 = (1, 0)`` and
  ``a2 = (1/2, sqrt(3)/2)`` so a site sits at ``((k + l/2)*a, l*sqrt(3)/2*a)``.
* ``distortion`` multiplies every y coordinate.  It models a vertical
  stretch of the array, which weakens couplings with a vertical
  component while leaving horizontal ones untouched.
* A periodic chain is embedded as a physical ring whose chord between
  adjacent sites equals ``spacing_um`` exactly; distances between ring
  sites are chord lengths.  Periodic 2d lattices keep the planar
  embedding and measure distances under the minimal-image convention.
* Graph distance ``m`` is the hop count on the nearest-neighbour bond
  graph: ``|k|`` on the chain, ``|k| + |l|`` on the square lattice and
  ``(|k| + |l| + |k + l|) / 2`` on the triangular lattice.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Sequence

import numpy as np

KINDS = ("chain", "square", "triangular")
BOUNDARIES = ("open", "periodic")
SYMMETRIZATIONS = ("none", "inversion", "quadrants")

# Nearest-neighbour displacement vectors, one per unordered bond direction.
_NN_DIRECTIONS = {
    "chain": ((1, 0),),
    "square": ((1, 0), (0, 1)),
    "triangular": ((1, 0), (0, 1), (1, -1)),
}


@dataclass(frozen=True)
class Site:
    """A single trap position with both integer and physical coordinates."""

    index: int
    x: float
    y: float
    k: int
    l: int


@dataclass
class LatticeGeometry:
    """An atom array: kind, extents, boundary and embedded site list."""

    kind: str
    dimensions: tuple[int, ...]
    boundary: str
    spacing_um: float
    distortion: float
    sites: list[Site]
    _positions: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def positions(self) -> np.ndarray:
        """Site positions in um, shape (n_sites, 2)."""
        if self._positions is None:
            self._positions = np.array([[s.x, s.y] for s in self.sites], dtype=float)
        return self._positions

    def coords(self) -> np.ndarray:
        """Integer lattice coordinates (k, l), shape (n_sites, 2)."""
        return np.array([[s.k, s.l] for s in self.sites], dtype=int)

    def extents(self) -> tuple[int, int]:
        """(Lk, Ll) with Ll = 1 for chains."""
        if self.kind == "chain":
            return self.dimensions[0], 1
        return self.dimensions[0], self.dimensions[1]

    def displacement(self, i: int, j: int) -> tuple[int, int]:
        """Lattice displacement from site i to site j.

        On periodic lattices the displacement is wrapped per axis into
        ``(-L/2, L/2]`` (minimal image in lattice coordinates).
        """
        si, sj = self.sites[i], self.sites[j]
        dk, dl = sj.k - si.k, sj.l - si.l
        if self.boundary == "periodic":
            lk, ll = self.extents()
            dk = (dk + lk // 2) % lk - lk // 2 if lk > 1 else dk
            if dk == -lk // 2 and lk % 2 == 0:
                dk = lk // 2
            if self.kind != "chain" and ll > 1:
                dl = (dl + ll // 2) % ll - ll // 2
                if dl == -ll // 2 and ll % 2 == 0:
                    dl = ll // 2
        return dk, dl

    def distance_matrix(self) -> np.ndarray:
        """Pairwise distances in um, minimal-image for periodic lattices."""
        pos = self.positions()
        diff = pos[:, None, :] - pos[None, :, :]
        if self.boundary == "periodic" and self.kind != "chain":
            best = np.full(diff.shape[:2], np.inf)
            for shift in self._periodic_translations():
                d = np.hypot(diff[..., 0] - shift[0], diff[..., 1] - shift[1])
                np.minimum(best, d, out=best)
            return best
        # Ring positions already live on the circle, chords are exact.
        return np.hypot(diff[..., 0], diff[..., 1])

    def _periodic_translations(self) -> list[tuple[float, float]]:
        lk, ll = self.extents()
        a1, a2 = _primitive_vectors(self.kind, self.spacing_um, self.distortion)
        out = []
        for i1 in (-1, 0, 1):
            for i2 in (-1, 0, 1):
                out.append((i1 * lk * a1[0] + i2 * ll * a2[0],
                            i1 * lk * a1[1] + i2 * ll * a2[1]))
        return out


def _primitive_vectors(kind: str, a: float, lam: float) -> tuple[tuple[float, float], tuple[float, float]]:
    if kind == "square":
        return (a, 0.0), (0.0, a * lam)
    if kind == "triangular":
        return (a, 0.0), (a / 2.0, a * math.sqrt(3.0) / 2.0 * lam)
    return (a, 0.0), (0.0, 0.0)


def build_lattice(kind: str,
                  dimensions: Sequence[int],
                  boundary: str = "open",
                  spacing_um: float = 1.0,
                  distortion: float = 1.0) -> LatticeGeometry:
    """Construct a chain, square, or triangular array.

    Parameters
    ----------
    kind : {"chain", "square", "triangular"}
    dimensions : (L,) for chains, (Lk, Ll) otherwise
    boundary : {"open", "periodic"}
    spacing_um : nearest-neighbour spacing before distortion
    distortion : vertical stretch factor applied to y coordinates
    """
    if kind not in KINDS:
        raise ValueError(f"unknown lattice kind {kind!r}")
    if boundary not in BOUNDARIES:
        raise ValueError(f"unknown boundary {boundary!r}")
    dimensions = tuple(int(d) for d in dimensions)
    if any(d < 1 for d in dimensions):
        raise ValueError("dimensions must be positive")
    if spacing_um <= 0:
        raise ValueError("spacing_um must be positive")
    if distortion <= 0:
        raise ValueError("distortion must be positive")

    sites: list[Site] = []
    if kind == "chain":
        if len(dimensions) != 1:
            raise ValueError("chain takes dimensions (L,)")
        (n,) = dimensions
        if boundary == "periodic":
            if n < 3:
                raise ValueError("a periodic chain needs at least 3 sites")
            # Ring radius chosen so adjacent chords equal spacing_um exactly.
            radius = spacing_um / (2.0 * math.sin(math.pi / n))
            for i in range(n):
                phi = 2.0 * math.pi * i / n
                sites.append(Site(i, radius * math.cos(phi),
                                  radius * math.sin(phi) * distortion, i, 0))
        else:
            for i in range(n):
                sites.append(Site(i, i * spacing_um, 0.0, i, 0))
    else:
        if len(dimensions) != 2:
            raise ValueError(f"{kind} takes dimensions (Lk, Ll)")
        lk, ll = dimensions
        a1, a2 = _primitive_vectors(kind, spacing_um, distortion)
        idx = 0
        for l in range(ll):
            for k in range(lk):
                x = k * a1[0] + l * a2[0]
                y = k * a1[1] + l * a2[1]
                sites.append(Site(idx, x, y, k, l))
                idx += 1
    return LatticeGeometry(kind, dimensions, boundary, spacing_um, distortion, sites)


def graph_distance(kind: str, displacement: tuple[int, int]) -> int:
    """Hop count between sites separated by (k, l) on the bond graph."""
    k, l = displacement
    if kind == "chain":
        return abs(k)
    if kind == "square":
        return abs(k) + abs(l)
    if kind == "triangular":
        return (abs(k) + abs(l) + abs(k + l)) // 2
    raise ValueError(f"unknown lattice kind {kind!r}")


def count_shortest_paths(kind: str, displacement: tuple[int, int]) -> int:
    """Number of distinct shortest bond paths realising a displacement.

    On the square lattice a shortest path to ``(k, l)`` interleaves
    ``|k|`` horizontal and ``|l|`` vertical unit steps, giving
    ``binomial(|k| + |l|, min(|k|, |l|))``.  On the triangular lattice
    the same binomial applies after mapping to the hex-grid cube
    coordinates ``(k, -k-l, l)``: with ``m`` the graph distance, the
    count is ``binomial(m, s)`` where ``s`` is the smallest coordinate
    magnitude.  Chains admit exactly one path.
    """
    k, l = displacement
    if kind == "chain":
        return 1
    if kind == "square":
        return comb(abs(k) + abs(l), min(abs(k), abs(l)))
    if kind == "triangular":
        cube = (abs(k), abs(k + l), abs(l))
        m = (cube[0] + cube[1] + cube[2]) // 2
        return comb(m, min(cube))
    raise ValueError(f"unknown lattice kind {kind!r}")


@dataclass
class DisplacementClass:
    """All ordered site pairs sharing a set of equivalent displacements."""

    vectors: tuple[tuple[int, int], ...]
    shell: int
    pairs: list[tuple[int, int]]

    @property
    def representative(self) -> tuple[int, int]:
        return self.vectors[0]

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)


def _canonical_inversion(d: tuple[int, int]) -> tuple[int, int]:
    k, l = d
    return (k, l) if (k, l) > (-k, -l) else (-k, -l)


def default_symmetrization(kind: str) -> str:
    """Square arrays merge sign quadrants; other kinds merge only d, -d."""
    return "quadrants" if kind == "square" else "inversion"


def displacement_classes(geometry: LatticeGeometry,
                         max_shell: int,
                         symmetrization: str | None = None) -> list[DisplacementClass]:
    """Group ordered site pairs by displacement up to the chosen symmetry.

    ``symmetrization`` is one of ``"none"``, ``"inversion"`` or
    ``"quadrants"`` (square only); ``None`` picks the lattice default.
    ``"none"`` and ``"inversion"`` produce identical classes because an
    ordered pair (i, j) and its reverse always carry opposite
    displacements, so the orbit {d, -d} is traversed either way.
    Classes are returned sorted by shell, then representative, and only
    shells ``1 <= m <= max_shell`` are kept.
    """
    if symmetrization is None:
        symmetrization = default_symmetrization(geometry.kind)
    if symmetrization not in SYMMETRIZATIONS:
        raise ValueError(f"unknown symmetrization {symmetrization!r}")
    if symmetrization == "quadrants" and geometry.kind != "square":
        raise ValueError("quadrant symmetrization merges displacements with "
                         "different graph distances off the square lattice")
    if max_shell < 1:
        raise ValueError("max_shell must be at least 1")

    def canon(d: tuple[int, int]) -> tuple[int, int]:
        if symmetrization == "quadrants":
            return (abs(d[0]), abs(d[1]))
        return _canonical_inversion(d)

    groups: dict[tuple[int, int], DisplacementClass] = {}
    n = geometry.n_sites
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = geometry.displacement(i, j)
            m = graph_distance(geometry.kind, d)
            if not 1 <= m <= max_shell:
                continue
            key = canon(d)
            cls = groups.get(key)
            if cls is None:
                cls = DisplacementClass(vectors=(), shell=m, pairs=[])
                groups[key] = cls
            if d not in cls.vectors:
                cls.vectors = tuple(sorted(cls.vectors + (d,), reverse=True))
            cls.pairs.append((i, j))
    out = sorted(groups.values(), key=lambda c: (c.shell, c.representative))
    return out


def nearest_neighbor_pairs(geometry: LatticeGeometry) -> list[tuple[int, int, int, int]]:
    """Bond list as (i, j, dk, dl) with i < j and graph distance 1."""
    directions = set()
    for d in _NN_DIRECTIONS[geometry.kind]:
        directions.add(d)
        directions.add((-d[0], -d[1]))
    out = []
    n = geometry.n_sites
    for i in range(n):
        for j in range(i + 1, n):
            d = geometry.displacement(i, j)
            if d in directions:
                out.append((i, j, d[0], d[1]))
    return out


def geometry_to_json(geometry: LatticeGeometry) -> str:
    """Serialize a geometry to the interchange JSON document."""
    doc = {
        "kind": geometry.kind,
        "dimensions": list(geometry.dimensions),
        "boundary": geometry.boundary,
        "spacing_um": geometry.spacing_um,
        "distortion": geometry.distortion,
        "sites": [
            {"index": s.index, "x": s.x, "y": s.y, "k": s.k, "l": s.l}
            for s in geometry.sites
        ],
    }
    return json.dumps(doc, indent=2)


def geometry_from_json(text: str) -> LatticeGeometry:
    doc = json.loads(text)
    sites = [Site(int(s["index"]), float(s["x"]), float(s["y"]),
                  int(s["k"]), int(s["l"])) for s in doc["sites"]]
    sites.sort(key=lambda s: s.index)
    if [s.index for s in sites] != list(range(len(sites))):
        raise ValueError("site indices must be a permutation of 0..n-1")
    return LatticeGeometry(
        kind=doc["kind"],
        dimensions=tuple(int(d) for d in doc["dimensions"]),
        boundary=doc["boundary"],
        spacing_um=float(doc["spacing_um"]),
        distortion=float(doc["distortion"]),
        sites=sites,
    )
