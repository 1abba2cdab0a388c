"""Spanning forests oriented toward a root, sampled and enumerated.

The sampler is Wilson's method in its walk-and-loop-erase form: grow the
tree by running network random walks from unreached vertices and attaching
their loop erasures.  For lattices seen through a window, the wired vertex z
stands in for infinity: the first walk starts at the root, runs until it
hits z, and its loop erasure is attached with reversed orientation so that
the branch points back toward the root.

Exact distributions on small graphs come from brute-force enumeration and
serve as oracles for the samplers.
"""

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from .network import FiniteNetwork, lattice_distance, window_vertices, wire


class ForestError(ValueError):
    pass


def loop_erase(walk):
    """Chronological loop erasure of a finite directed walk.

    Repeatedly jump to the last occurrence of the current vertex and take
    the step after it; the result is a simple path from the walk's start.
    """
    walk = list(walk)
    if not walk:
        raise ForestError("cannot loop-erase an empty walk")
    last = {}
    for i, v in enumerate(walk):
        last[v] = i
    out = [walk[0]]
    j = last[walk[0]]
    n = len(walk) - 1
    while j < n:
        v = walk[j + 1]
        out.append(v)
        j = last[v]
    return out


@dataclass
class OrientedForest:
    """Out-edges of a sampled forest over a FiniteNetwork.

    ``parent[i]`` is the vertex index the out-edge of i points to, or -1
    when i has no out-edge (the root, and any vertex whose out-edge crossed
    to the wired vertex and was discarded).
    """
    fnet: FiniteNetwork
    root: int
    parent: np.ndarray
    z_attached: list = field(default_factory=list)
    root_branch: list = None

    def edges(self):
        return [(i, int(p)) for i, p in enumerate(self.parent) if p >= 0]

    def edge_lines(self):
        """One 'x -> y' line per oriented edge, for the text export."""
        verts = self.fnet.vertices
        return ["%s -> %s" % (verts[i], verts[j]) for i, j in self.edges()]

    def key(self):
        return tuple(int(p) for p in self.parent)



def _resolve(fnet, v):
    """Vertex label or raw index -> index (labels win when ambiguous)."""
    try:
        if v in fnet.index:
            return fnet.index[v]
    except TypeError:
        pass
    if isinstance(v, (int, np.integer)):
        return int(v)
    raise ForestError("unknown vertex %r" % (v,))

def _network_walk_until(fnet, start, in_tree, rng):
    """Network random walk from start, stopped on hitting the marked set."""
    path = [start]
    cur = start
    while not in_tree[cur]:
        nxt = fnet.target(cur, _sample_slot(fnet, cur, rng))
        path.append(nxt)
        cur = nxt
    return path


def _sample_slot(fnet, i, rng):
    cum = fnet.cum_row(i)
    u = rng.random()
    k = int(np.searchsorted(cum, u, side="right"))
    return min(k, len(cum) - 1)


def wilson_rooted(fnet, r, rng, ordering=None):
    """Sample a spanning tree oriented toward r, with probability
    proportional to the product of its edge conductances.

    The ordering over the remaining vertices may be anything; the law of the
    output does not depend on it.
    """
    n = len(fnet)
    r_idx = _resolve(fnet, r)
    if ordering is None:
        order = [i for i in range(n) if i != r_idx]
    else:
        order = [_resolve(fnet, v) for v in ordering]
        if sorted(order) != sorted(i for i in range(n) if i != r_idx):
            raise ForestError("ordering must cover every vertex except the root")
    in_tree = [False] * n
    in_tree[r_idx] = True
    parent = np.full(n, -1, dtype=np.int64)
    for x in order:
        if in_tree[x]:
            continue
        path = _network_walk_until(fnet, x, in_tree, rng)
        erased = loop_erase(path)
        for a, b in zip(erased, erased[1:]):
            parent[a] = b
            in_tree[a] = True
    return OrientedForest(fnet, r_idx, parent)


def wilson_transient_window(net, r, window, rng, ordering=None):
    """Wilson's method on a wired lattice window, root branch reversed.

    The walk from the root r runs until it reaches the wired vertex z (the
    stand-in for infinity); its loop erasure is attached with every edge
    reversed, so the branch points toward r.  All later walks attach forward
    as usual.  Edges incident to z are dropped from the output; the vertices
    that lose their out-edge this way are reported in ``z_attached``.
    """
    fnet = wire(net, window)
    if fnet.wired_index is None:
        raise ForestError("window covers the whole network; use wilson_rooted")
    center = window.center_for(net)
    if lattice_distance(net, r, center) >= window.radius:
        raise ForestError("root must lie in the window interior")
    z = fnet.wired_index
    n = len(fnet)
    r_idx = fnet.index[r]

    in_tree = [False] * n
    in_tree[z] = True
    parent = np.full(n, -1, dtype=np.int64)

    root_path = _network_walk_until(fnet, r_idx, in_tree, rng)
    branch = loop_erase(root_path)            # r, ..., z
    for a, b in zip(branch, branch[1:]):
        if b != z:
            parent[b] = a                     # reversed orientation
        in_tree[a] = True

    if ordering is None:
        order = [i for i in range(n) if i != r_idx and i != z]
    else:
        order = [fnet.index[v] for v in ordering]
    z_attached = []
    for x in order:
        if in_tree[x]:
            continue
        path = _network_walk_until(fnet, x, in_tree, rng)
        erased = loop_erase(path)
        for a, b in zip(erased, erased[1:]):
            if b == z:
                z_attached.append(a)
            else:
                parent[a] = b
            in_tree[a] = True
    return OrientedForest(fnet, r_idx, parent, z_attached=z_attached,
                          root_branch=branch)


def sample_wsf_plus_window(net, window, rng, root=None):
    """Rotor configuration over a lattice window, drawn from the wired
    forest law plus one independent out-edge at the root.

    Walks run on the full lattice and count as having reached the wired
    vertex once they leave the window, which is the same law as running them
    on the wired network.  The root walk's loop erasure is committed with
    reversed orientation; later vertices attach forward.  A vertex whose
    branch exits the window keeps the generator of its exit step as its
    rotor (the conductance-proportional choice among its exterior
    neighbors), which the walker never reads as long as margin >= 1.

    Returns (rotor slots in window-vertex order, list of exit-attached
    vertices).
    """
    center = window.center_for(net)
    radius = window.radius
    root = net.identity if root is None else root
    if lattice_distance(net, root, center) >= radius:
        raise ForestError("root must lie in the window interior")

    mu_cum = np.cumsum(net.mu())

    def inside(v):
        return lattice_distance(net, v, center) <= radius

    def draw_step(rng):
        u = rng.random()
        k = int(np.searchsorted(mu_cum, u, side="right"))
        return min(k, len(mu_cum) - 1)

    rotor = {}
    exit_dir = {}
    z_attached = []

    # root branch, reversed
    cur = root
    while inside(cur):
        g = draw_step(rng)
        exit_dir[cur] = g
        cur = net.neighbor(cur, g)
    v = root
    while True:
        g = exit_dir[v]
        w = net.neighbor(v, g)
        if not inside(w):
            break
        rotor[w] = net.inverse_generator_index(g)
        v = w
    rotor[root] = draw_step(rng)

    order = window_vertices(net, window)
    for x in order:
        if x in rotor:
            continue
        cur = x
        while inside(cur) and cur not in rotor:
            g = draw_step(rng)
            exit_dir[cur] = g
            cur = net.neighbor(cur, g)
        v = x
        while True:
            g = exit_dir[v]
            rotor[v] = g
            w = net.neighbor(v, g)
            if not inside(w):
                z_attached.append(v)
                break
            if w in rotor:
                break
            v = w
    slots = np.array([rotor[v] for v in order], dtype=np.int64)
    return slots, z_attached


def sample_wsf_plus(fnet, r, rng):
    """Rotor configuration drawn from the forest law plus one independent
    conductance-proportional out-edge at the root.

    Returns adjacency-slot indices, one per vertex, so every vertex has
    out-degree exactly one.
    """
    r_idx = _resolve(fnet, r)
    tree = wilson_rooted(fnet, r_idx, rng)
    rotor = np.empty(len(fnet), dtype=np.int64)
    for i, p in enumerate(tree.parent):
        if i == r_idx:
            continue
        rotor[i] = fnet.slot_of(i, int(p))
    rotor[r_idx] = _sample_slot(fnet, r_idx, rng)
    return rotor


def tree_weight(edges, fnet):
    """Product of edge conductances; the empty product is 1."""
    if isinstance(edges, OrientedForest):
        edges = edges.edges()
    w = 1.0
    for i, j in edges:
        w *= fnet.conductance(i, j)
    return w


@dataclass
class ExactDistribution:
    """A finite exact law: (key, probability) pairs with total mass one."""
    entries: list

    def __post_init__(self):
        total = sum(p for _, p in self.entries)
        if abs(total - 1.0) > 1e-12:
            raise ForestError("probabilities sum to %.15g, not 1" % total)
        if any(p <= 0 for _, p in self.entries):
            raise ForestError("zero or negative probability entry")
        if len({k for k, _ in self.entries}) != len(self.entries):
            raise ForestError("duplicate support points")

    def as_dict(self):
        return dict(self.entries)

    def __len__(self):
        return len(self.entries)


DEFAULT_VERTEX_CAP = 10
DEFAULT_SUBSET_CAP = 2_000_000


def enumerate_spanning_trees(fnet, r, vertex_cap=DEFAULT_VERTEX_CAP,
                             subset_cap=DEFAULT_SUBSET_CAP):
    """Exact law of the r-oriented spanning tree, by brute force over all
    edge subsets of size |V| - 1.

    Keys are parent tuples (vertex indices, -1 at the root).
    """
    n = len(fnet)
    if n > vertex_cap:
        raise ForestError("graph too large to enumerate (%d > %d vertices)"
                          % (n, vertex_cap))
    edges = fnet.edges
    if comb(len(edges), n - 1) > subset_cap:
        raise ForestError("too many edge subsets to enumerate")
    r_idx = _resolve(fnet, r)

    entries = []
    total = 0.0
    for subset in combinations(edges, n - 1):
        dsu = list(range(n))

        def find(a):
            while dsu[a] != a:
                dsu[a] = dsu[dsu[a]]
                a = dsu[a]
            return a

        ok = True
        for i, j, _ in subset:
            ri, rj = find(i), find(j)
            if ri == rj:
                ok = False
                break
            dsu[ri] = rj
        if not ok:
            continue
        # orient the tree toward the root: unique, by walking out from r
        adj = [[] for _ in range(n)]
        for i, j, _ in subset:
            adj[i].append(j)
            adj[j].append(i)
        parent = [-1] * n
        stack = [r_idx]
        seen = [False] * n
        seen[r_idx] = True
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    parent[w] = v
                    stack.append(w)
        w = 1.0
        for i, j, c in subset:
            w *= c
        entries.append([tuple(parent), w])
        total += w
    return ExactDistribution([(k, w / total) for k, w in entries])


def _config_space(fnet):
    """All out-degree-one configurations as mixed-radix slot arrays."""
    n = len(fnet)
    degrees = [fnet.degree(i) for i in range(n)]
    size = 1
    for d in degrees:
        size *= d
    if size > 8_000_000:
        raise ForestError("rotor configuration space too large (%d)" % size)
    strides = np.empty(n, dtype=np.int64)
    acc = 1
    for i in range(n - 1, -1, -1):
        strides[i] = acc
        acc *= degrees[i]
    codes = np.arange(size, dtype=np.int64)
    digits = np.empty((size, n), dtype=np.int8)
    for i in range(n):
        digits[:, i] = (codes // strides[i]) % degrees[i]
    return digits, strides


def exact_wsf_plus_product(fnet, r, **caps):
    """Exact rotor-configuration law built as (tree law) x (root out-edge)."""
    r_idx = _resolve(fnet, r)
    trees = enumerate_spanning_trees(fnet, r_idx, **caps)
    mu = fnet.mu_row(r_idx)
    entries = []
    for parent, p_tree in trees.entries:
        slots = [0] * len(fnet)
        for i, pv in enumerate(parent):
            if i != r_idx:
                slots[i] = fnet.slot_of(i, pv)
        for y_slot, p_y in enumerate(mu):
            slots[r_idx] = y_slot
            entries.append((tuple(slots), p_tree * p_y))
    return ExactDistribution(entries)


def exact_wsf_plus_unicycle(fnet, r):
    """Exact rotor-configuration law as the weight-proportional distribution
    over out-degree-one configurations whose unique directed cycle passes
    through r (spanning unicycles rooted at r)."""
    n = len(fnet)
    r_idx = _resolve(fnet, r)
    digits, _ = _config_space(fnet)
    size = digits.shape[0]

    targets = np.zeros((n, max(fnet.degree(i) for i in range(n))), dtype=np.int64)
    conds = np.ones_like(targets, dtype=float)
    for i in range(n):
        for s, (j, c) in enumerate(fnet.adjacency[i]):
            targets[i, s] = j
            conds[i, s] = c

    # successor vertex of each vertex under each configuration
    succ = np.empty((size, n), dtype=np.int64)
    for i in range(n):
        succ[:, i] = targets[i, digits[:, i]]

    # iterate the successor map far enough to land on a cycle everywhere
    reach = succ.copy()
    steps = 1
    while steps < n:
        reach = np.take_along_axis(succ, reach, axis=1)
        steps *= 2

    # component label: minimum cycle vertex reachable from each vertex
    label = reach.copy()
    for _ in range(n):
        label = np.minimum(label, np.take_along_axis(label, succ, axis=1))
    connected = label.max(axis=1) == label.min(axis=1)

    # r lies on a cycle iff iterating the successor map returns to r
    on_cycle = np.zeros(size, dtype=bool)
    pos = succ[:, r_idx]
    for _ in range(n):
        on_cycle |= pos == r_idx
        pos = succ[np.arange(size), pos]

    mask = connected & on_cycle
    weights = np.ones(size)
    for i in range(n):
        weights *= conds[i, digits[:, i]]
    weights[~mask] = 0.0
    total = weights.sum()
    entries = [(tuple(int(d) for d in digits[c]), weights[c] / total)
               for c in np.nonzero(mask)[0]]
    return ExactDistribution(entries)


def exact_wsf_plus(fnet, r, cross_check=True, tol=1e-12, **caps):
    """Exact law of the forest-plus-root-edge rotor configuration.

    Computed as the product of the tree law with the root's out-edge
    distribution; with ``cross_check`` the independently enumerated rooted
    unicycle law must agree term by term.
    """
    product = exact_wsf_plus_product(fnet, r, **caps)
    if cross_check:
        unicycle = exact_wsf_plus_unicycle(fnet, r)
        pd, ud = product.as_dict(), unicycle.as_dict()
        if set(pd) != set(ud):
            raise ForestError("product and unicycle laws have different support")
        worst = max(abs(pd[k] - ud[k]) for k in pd)
        if worst > tol:
            raise ForestError("product and unicycle laws disagree (%.3g)" % worst)
    return product


def check_forest_invariants(forest, expect_root_reachable=True):
    """Out-degree law, acyclicity and root reachability for one sample.

    Raises AssertionError on the first violation.  Vertices whose out-edge
    was discarded at the wired vertex are treated as extra roots.
    """
    parent = forest.parent
    n = len(parent)
    roots = {forest.root} | set(forest.z_attached)
    if forest.fnet.wired_index is not None:
        roots.add(forest.fnet.wired_index)
    for i in range(n):
        if i in roots:
            assert parent[i] == -1 or i in forest.z_attached, \
                "root-like vertex %d has an out-edge" % i
        else:
            assert parent[i] >= 0, "vertex %d lost its out-edge" % i
    for i in range(n):
        seen = set()
        cur = i
        while parent[cur] >= 0:
            assert cur not in seen, "cycle through vertex %d" % cur
            seen.add(cur)
            cur = parent[cur]
        if expect_root_reachable and i not in roots and not forest.z_attached \
                and forest.fnet.wired_index is None:
            assert cur == forest.root, \
                "vertex %d does not reach the root" % i
