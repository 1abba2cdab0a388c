"""Weighted graphs the walks run on.

Three families are supported: integer lattices Z^d, the triangular lattice
(both infinite, always viewed through a finite window), and finite Cayley
graphs of products of cyclic groups.  All of them are Cayley graphs: vertices
are group elements stored as int tuples, and the neighbors of x are x*s for
the generators s in a fixed order.  That fixed order is what makes seeded
runs reproducible, so every neighbor list here is deterministic.

Conductances are assigned per generator with c(s) = c(s^-1), which induces a
symmetric edge conductance c{x,y} = c(y^-1 x).
"""

import math
from dataclasses import dataclass, field

import numpy as np

SQRT3_2 = math.sqrt(3.0) / 2.0

# angular order, generator k sits at angle 60*k degrees once embedded
TRIANGULAR_GENERATORS = (
    (1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1),
)


class NetworkError(ValueError):
    """Rejected network construction or out-of-scope vertex."""


class Network:
    """A weighted Cayley graph (possibly infinite).

    kind is one of "zd", "triangular", "finite".  For "finite" the group is a
    product of cyclic groups with the given moduli.  Vertices are int tuples;
    the identity is the all-zero tuple.  ``labels_per_edge`` is 1 for simple
    graphs and m > 1 for the multigraphs produced by hidden-walk expansion,
    in which case the out-edges of x are indexed by
    (neighbor_index * m + label_index).
    """

    def __init__(self, kind, dimension, generators, conductances,
                 moduli=None, labels_per_edge=1):
        self.kind = kind
        self.dimension = dimension
        self.generators = [tuple(int(c) for c in g) for g in generators]
        self.conductances = [float(c) for c in conductances]
        self.moduli = tuple(int(m) for m in moduli) if moduli else None
        self.labels_per_edge = int(labels_per_edge)

        if len(self.generators) != len(self.conductances):
            raise NetworkError("one conductance per generator required")
        if any(c <= 0 for c in self.conductances):
            raise NetworkError("conductances must be strictly positive")

        self._gen_index = {g: i for i, g in enumerate(self.generators)}
        self._mu = np.array(self.conductances, dtype=float)
        self._mu /= self._mu.sum()
        # index of the inverse generator, used to reverse oriented edges
        self._inverse_index = [
            self._gen_index[self.inverse(g)] for g in self.generators
        ]
        for i, j in enumerate(self._inverse_index):
            if abs(self.conductances[i] - self.conductances[j]) > 1e-12:
                raise NetworkError(
                    "conductance must satisfy c(s) = c(s^-1); generator %r "
                    "breaks the symmetry" % (self.generators[i],))

    # -- group structure ---------------------------------------------------

    @property
    def identity(self):
        return (0,) * self.dimension

    @property
    def degree(self):
        """Number of outgoing edges per vertex (counts parallel labels)."""
        return len(self.generators) * self.labels_per_edge

    @property
    def is_finite(self):
        return self.kind == "finite"

    def translate(self, g, x):
        """Group product g*x (vector addition, componentwise mod for finite)."""
        if self.moduli is None:
            return tuple(a + b for a, b in zip(g, x))
        return tuple((a + b) % n for a, b, n in zip(g, x, self.moduli))

    def inverse(self, x):
        if self.moduli is None:
            return tuple(-a for a in x)
        return tuple((-a) % n for a, n in zip(x, self.moduli))

    def inverse_generator_index(self, k):
        return self._inverse_index[k]

    # -- graph structure ---------------------------------------------------

    def neighbor(self, x, k):
        """k-th neighbor of x, in generator order."""
        return self.translate(x, self.generators[k])

    def neighbors(self, x):
        """Ordered list of (neighbor, conductance) pairs."""
        return [(self.translate(x, g), c)
                for g, c in zip(self.generators, self.conductances)]

    def mu(self, x=None):
        """Conductance-proportional distribution on the neighbors of x.

        The same vector at every vertex by translation invariance; ``x`` is
        accepted for interface symmetry.
        """
        return self._mu.copy()

    def generator_index_of_step(self, x, y):
        """Index k with y = x * s_k, or raise if x and y are not adjacent."""
        d = self.translate(self.inverse(x), y)
        try:
            return self._gen_index[d]
        except KeyError:
            raise NetworkError("%r is not a neighbor of %r" % (y, x)) from None

    def vertices(self):
        """All vertices of a finite network, in lexicographic order."""
        if self.moduli is None:
            raise NetworkError("infinite lattice has no vertex list; use a window")
        verts = [()]
        for n in self.moduli:
            verts = [v + (i,) for v in verts for i in range(n)]
        return verts

    # -- embedding in R^d --------------------------------------------------

    def embed(self, x):
        """Deterministic embedding into R^d (lattices only)."""
        if self.kind == "zd":
            return np.asarray(x, dtype=float)
        if self.kind == "triangular":
            a, b = x
            return np.array([a + 0.5 * b, SQRT3_2 * b])
        raise NetworkError("finite cyclic groups have no canonical embedding")

    def embedded_generators(self):
        return np.array([self.embed(g) for g in self.generators])


def make_lattice(dimension, conductance=1.0):
    """Z^d with generators +e1, -e1, ..., +ed, -ed.

    ``conductance`` may be a scalar, a length-d sequence (one weight per
    axis), or a length-2d sequence in generator order; the last form must be
    symmetric under negation.
    """
    d = int(dimension)
    if d < 1:
        raise NetworkError("lattice dimension must be >= 1")
    gens = []
    for i in range(d):
        e = [0] * d
        e[i] = 1
        gens.append(tuple(e))
        gens.append(tuple(-c for c in e))
    if np.isscalar(conductance):
        cond = [float(conductance)] * (2 * d)
    else:
        cs = [float(c) for c in conductance]
        if len(cs) == d:
            cond = [c for c in cs for _ in (0, 1)]
        elif len(cs) == 2 * d:
            cond = cs
        else:
            raise NetworkError("expected %d or %d conductances, got %d"
                               % (d, 2 * d, len(cs)))
    return Network("zd", d, gens, cond)


def make_triangular():
    """The triangular lattice with unit conductance.

    Vertices are integer pairs (a, b) standing for a*(1,0) + b*(1/2, sqrt3/2);
    the six generators sit at embedded angles 0, 60, ..., 300 degrees in that
    order.
    """
    return Network("triangular", 2, TRIANGULAR_GENERATORS, [1.0] * 6)


def make_finite_cayley(moduli, generators, conductance=1.0):
    """Cayley graph of Z_n1 x ... x Z_nk with the given generator list.

    Generators must be distinct nonidentity elements, closed under inversion,
    and must generate the group.  A generator pair that collapses to a single
    repeated element (such as 2 = -2 listed twice in Z_4) would create a
    doubled edge and is rejected: only simple graphs are supported here.
    """
    if isinstance(moduli, int):
        moduli = (moduli,)
    moduli = tuple(int(n) for n in moduli)
    if any(n < 2 for n in moduli):
        raise NetworkError("cyclic factors must have order >= 2")
    if len(moduli) == 1 and moduli[0] < 3:
        raise NetworkError("cycles need n >= 3")
    dim = len(moduli)

    gens = []
    for g in generators:
        if isinstance(g, int):
            g = (g,)
        if len(g) != dim:
            raise NetworkError("generator %r does not match moduli %r" % (g, moduli))
        gens.append(tuple(int(c) % n for c, n in zip(g, moduli)))

    ident = (0,) * dim
    if ident in gens:
        raise NetworkError("identity is not allowed as a generator")
    if len(set(gens)) != len(gens):
        raise NetworkError(
            "duplicate generator after reduction (self-paired element); this "
            "would create parallel edges and is rejected on a simple graph")
    for g in gens:
        inv = tuple((-c) % n for c, n in zip(g, moduli))
        if inv not in gens:
            raise NetworkError("generator set is not symmetric: missing %r" % (inv,))

    if np.isscalar(conductance):
        cond = [float(conductance)] * len(gens)
    else:
        cond = [float(c) for c in conductance]

    net = Network("finite", dim, gens, cond, moduli=moduli)

    # the generator set must generate the whole group (connectivity)
    seen = {ident}
    frontier = [ident]
    while frontier:
        x = frontier.pop()
        for g in gens:
            y = net.translate(x, g)
            if y not in seen:
                seen.add(y)
                frontier.append(y)
    order = 1
    for n in moduli:
        order *= n
    if len(seen) != order:
        raise NetworkError("generators do not generate the group "
                           "(%d of %d elements reached)" % (len(seen), order))
    return net


# -- windows and wiring ----------------------------------------------------

@dataclass(frozen=True)
class Window:
    """Finite view of an infinite lattice.

    For Z^d the window is the l-infinity box of the given radius around the
    center; for the triangular lattice it is the graph-distance ball.  The
    margin is the outer ring reserved for abort detection: walks are flagged
    truncated as soon as their distance from the center exceeds
    radius - margin.
    """
    radius: int
    margin: int = 0
    center: tuple = None

    def __post_init__(self):
        if self.radius < 0 or self.margin < 0 or self.margin > self.radius:
            raise NetworkError("need radius >= margin >= 0")

    def center_for(self, net):
        return self.center if self.center is not None else net.identity


def lattice_distance(net, x, center=None):
    """Window metric: l-infinity for Z^d, graph distance for triangular."""
    if center is not None:
        x = tuple(a - b for a, b in zip(x, center))
    if net.kind == "zd":
        return max(abs(c) for c in x)
    if net.kind == "triangular":
        a, b = x
        return (abs(a) + abs(b) + abs(a + b)) // 2
    raise NetworkError("windows only apply to infinite lattices")


def window_vertices(net, window):
    """Vertices of the window in deterministic (lexicographic) order."""
    r = window.radius
    center = window.center_for(net)
    out = []
    if net.kind == "zd":
        d = net.dimension
        coords = [()]
        for _ in range(d):
            coords = [c + (i,) for c in coords for i in range(-r, r + 1)]
        out = [tuple(a + b for a, b in zip(c, center)) for c in coords]
    elif net.kind == "triangular":
        for a in range(-r, r + 1):
            for b in range(-r, r + 1):
                if (abs(a) + abs(b) + abs(a + b)) // 2 <= r:
                    out.append((a + center[0], b + center[1]))
    else:
        raise NetworkError("windows only apply to infinite lattices")
    return out


class FiniteNetwork:
    """A finite electrical network with a fixed vertex and neighbor order.

    Built by wiring a lattice window (an extra vertex z absorbs everything
    outside), from a finite Cayley graph, or explicitly from an edge list for
    the small test graphs.  ``cayley`` points back at the generating Network
    when there is one, which is what makes translation (and hence the scenery
    process) available.
    """

    def __init__(self, vertices, adjacency, wired_index=None, cayley=None):
        self.vertices = list(vertices)
        self.index = {v: i for i, v in enumerate(self.vertices)}
        if len(self.index) != len(self.vertices):
            raise NetworkError("duplicate vertex labels")
        self.adjacency = [list(a) for a in adjacency]
        self.wired_index = wired_index
        self.cayley = cayley
        for i, adj in enumerate(self.adjacency):
            if not adj and len(self.vertices) > 1:
                raise NetworkError("vertex %r has no neighbors" % (self.vertices[i],))
            for j, c in adj:
                if c <= 0:
                    raise NetworkError("conductance must be positive")
        self._mu_cache = None
        self._cum_cache = None
        self._slot_cache = None
        self._check_connected()

    def _check_connected(self):
        n = len(self.vertices)
        seen = [False] * n
        stack = [0]
        seen[0] = True
        count = 1
        while stack:
            i = stack.pop()
            for j, _ in self.adjacency[i]:
                if not seen[j]:
                    seen[j] = True
                    count += 1
                    stack.append(j)
        if count != n:
            raise NetworkError("finite network is not connected")

    def __len__(self):
        return len(self.vertices)

    @property
    def edges(self):
        """Undirected edges as (i, j, c) with i < j, deterministic order."""
        out = []
        seen = set()
        for i in range(len(self.vertices)):
            for j, c in self.adjacency[i]:
                key = (min(i, j), max(i, j))
                if key not in seen:
                    seen.add(key)
                    out.append((key[0], key[1], c))
        return out

    def degree(self, i):
        return len(self.adjacency[i])

    def neighbors(self, v):
        """Ordered (vertex, conductance) pairs for a vertex label."""
        i = self.index[v]
        return [(self.vertices[j], c) for j, c in self.adjacency[i]]

    def conductance(self, i, j):
        for k, c in self.adjacency[i]:
            if k == j:
                return c
        raise NetworkError("no edge between %r and %r"
                           % (self.vertices[i], self.vertices[j]))

    def mu_row(self, i):
        """Conductance-proportional probabilities over adjacency[i]."""
        if self._mu_cache is None:
            self._mu_cache = [None] * len(self.vertices)
        if self._mu_cache[i] is None:
            w = np.array([c for _, c in self.adjacency[i]], dtype=float)
            self._mu_cache[i] = w / w.sum()
        return self._mu_cache[i]

    def cum_row(self, i):
        """Cumulative form of mu_row, for inverse-CDF sampling."""
        if self._cum_cache is None:
            self._cum_cache = [None] * len(self.vertices)
        if self._cum_cache[i] is None:
            self._cum_cache[i] = np.cumsum(self.mu_row(i))
        return self._cum_cache[i]

    def slot_of(self, i, j):
        """Position of neighbor j in adjacency[i]."""
        if self._slot_cache is None:
            self._slot_cache = [
                {j: s for s, (j, _) in enumerate(adj)} for adj in self.adjacency
            ]
        return self._slot_cache[i][j]

    def target(self, i, slot):
        return self.adjacency[i][slot][0]

    @classmethod
    def from_edges(cls, vertices, edges):
        """Explicit construction; neighbor order follows the edge list."""
        vertices = list(vertices)
        index = {v: i for i, v in enumerate(vertices)}
        adjacency = [[] for _ in vertices]
        seen = set()
        for u, v, c in edges:
            i, j = index[u], index[v]
            if i == j:
                raise NetworkError("loops are not allowed")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise NetworkError("parallel edge %r-%r" % (u, v))
            seen.add(key)
            adjacency[i].append((j, float(c)))
            adjacency[j].append((i, float(c)))
        return cls(vertices, adjacency)


def as_finite_network(net):
    """View a finite Cayley Network as a FiniteNetwork (neighbors in
    generator order), keeping the group structure attached."""
    if not net.is_finite:
        raise NetworkError("network is infinite; wire a window instead")
    verts = net.vertices()
    index = {v: i for i, v in enumerate(verts)}
    adjacency = []
    for v in verts:
        adjacency.append([(index[w], c) for w, c in net.neighbors(v)])
    return FiniteNetwork(verts, adjacency, cayley=net)


WIRED_LABEL = "z"


def wire(net, window):
    """Collapse everything outside the window to a single wired vertex z.

    Every boundary-crossing edge {x, y'} with y' outside the window
    contributes its conductance to c{x, z}; parallel edges to z are summed.
    A finite Cayley network is returned unchanged (no z) since nothing lies
    outside it.
    """
    if net.is_finite:
        return as_finite_network(net)
    verts = window_vertices(net, window)
    if not verts:
        raise NetworkError("empty window")
    inside = {v: i for i, v in enumerate(verts)}
    adjacency = [[] for _ in verts]
    z_weight = [0.0] * len(verts)
    for v in verts:
        i = inside[v]
        for w, c in net.neighbors(v):
            j = inside.get(w)
            if j is None:
                z_weight[i] += c
            else:
                adjacency[i].append((j, c))
    if not any(z_weight):
        return FiniteNetwork(verts, adjacency, cayley=net if net.is_finite else None)
    z_index = len(verts)
    z_adj = []
    for i, wz in enumerate(z_weight):
        if wz > 0.0:
            adjacency[i].append((z_index, wz))
            z_adj.append((i, wz))
    adjacency.append(z_adj)
    return FiniteNetwork(verts + [WIRED_LABEL], adjacency, wired_index=z_index)
