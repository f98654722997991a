"""Anchor-fixing automorphisms of a template and the node orbits they induce.

Each orbit of template nodes later projects, through matching, to one
equivalence set of graph nodes around every ego. Enumeration is brute force
over the (n-1)! permutations that fix the anchor; the size cap keeps that
at most 120 candidates.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .templates import AnchoredTemplate


def ego_automorphisms(template: AnchoredTemplate) -> list:
    """All node permutations fixing the anchor that preserve the edge set.

    Permutations are tuples p with p[0] == 0; p[i] is the image of node i.
    The result always contains the identity and is closed under composition
    and inverse (it is the anchor-fixing automorphism group).
    """
    n = template.num_nodes
    edges = template.edge_set()
    autos = []
    for tail in itertools.permutations(range(1, n)):
        p = (0,) + tail
        if template.directed:
            ok = all((p[i], p[j]) in edges for i, j in edges)
        else:
            ok = all((min(p[i], p[j]), max(p[i], p[j])) in edges for i, j in edges)
        if ok:
            autos.append(p)
    return autos


@dataclass(frozen=True)
class OrbitPartition:
    """Partition of template nodes into anchor-fixing automorphism orbits.

    Orbit 0 is always the anchor's singleton; orbits are numbered by their
    smallest member so the numbering is stable across runs.
    """

    template: AnchoredTemplate
    orbit_of: tuple
    orbits: tuple
    group_size: int

    @property
    def num_orbits(self) -> int:
        return len(self.orbits)


def orbit_partition(template: AnchoredTemplate) -> OrbitPartition:
    """Group template nodes that some anchor-fixing automorphism exchanges."""
    n = template.num_nodes
    autos = ego_automorphisms(template)
    seen = [False] * n
    orbits = []
    for i in range(n):
        if seen[i]:
            continue
        members = sorted({p[i] for p in autos})
        for m in members:
            seen[m] = True
        orbits.append(tuple(members))
    orbits.sort(key=lambda orb: orb[0])
    orbit_of = [0] * n
    for idx, orb in enumerate(orbits):
        for m in orb:
            orbit_of[m] = idx
    return OrbitPartition(template=template, orbit_of=tuple(orbit_of),
                          orbits=tuple(orbits), group_size=len(autos))
