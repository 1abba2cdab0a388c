"""Walk mechanisms: per-vertex Markov kernels on neighbor sets.

A transitive mechanism is a single row-stochastic matrix over the generator
order of a Cayley graph; the kernel at any other vertex is the same matrix
transported by translation, so rotor indices are what the kernels act on.
Hidden mechanisms carry a separate finite state space per vertex plus a jump
rule, and can be expanded into an ordinary mechanism on a multigraph whose
parallel edges remember the hidden state.
"""

import numpy as np

from .network import Network, make_lattice, make_triangular

STOCHASTIC_TOL = 1e-12


class MechanismError(ValueError):
    pass


def _validate_stochastic(mat, what="kernel"):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise MechanismError("%s must be a square matrix" % what)
    if (mat < -STOCHASTIC_TOL).any() or (mat > 1 + STOCHASTIC_TOL).any():
        raise MechanismError("%s entries must lie in [0, 1]" % what)
    rows = mat.sum(axis=1)
    if np.abs(rows - 1.0).max() > STOCHASTIC_TOL:
        raise MechanismError("%s rows must sum to 1 (max error %.3g)"
                             % (what, np.abs(rows - 1.0).max()))
    return mat


def sample_index(cum_row, rng):
    """Inverse-CDF draw from a cumulative row; consumes exactly one variate."""
    u = rng.random()
    k = int(np.searchsorted(cum_row, u, side="right"))
    return min(k, len(cum_row) - 1)


class Mechanism:
    """Transitive mechanism: one kernel at the identity, transported.

    ``kernel[i, j]`` is the probability that a rotor currently on out-edge i
    moves to out-edge j (indices in the owning network's fixed edge order).
    When ``factored`` is set, the kernel is the hidden-expansion product
    p(s, s') * f(s')(y') and sampling draws the two stages separately so that
    a hidden walk and its expanded walk can share one variate stream.
    """

    def __init__(self, net, kernel, label="custom", factored=None):
        self.net = net
        self.kernel = _validate_stochastic(kernel)
        if net is not None and self.kernel.shape[0] != net.degree:
            raise MechanismError("kernel size %d does not match degree %d"
                                 % (self.kernel.shape[0], net.degree))
        self.label = label
        self.factored = None
        self._cum = np.cumsum(self.kernel, axis=1)
        if factored is not None:
            p, f = factored
            self.factored = (np.cumsum(p, axis=1), np.cumsum(f, axis=1),
                             f.shape[0])

    @property
    def degree(self):
        return self.kernel.shape[0]

    def row(self, i):
        return self.kernel[i]

    def sample(self, current, rng):
        """New rotor index given the current one.

        Consumes one variate, or two (hidden draw then jump draw) for a
        factored hidden-expansion kernel; point masses still consume their
        variate so streams stay aligned across mechanisms.
        """
        if self.factored is None:
            return sample_index(self._cum[current], rng)
        p_cum, f_cum, m = self.factored
        s_new = sample_index(p_cum[current % m], rng)
        target = sample_index(f_cum[s_new], rng)
        return target * m + s_new

    def sample_at(self, vertex_index, current, rng):
        return self.sample(current, rng)


class TableMechanism:
    """Per-vertex kernel tables over a FiniteNetwork's adjacency order."""

    def __init__(self, fnet, tables, label="table"):
        self.fnet = fnet
        self.tables = []
        self.label = label
        for i, t in enumerate(tables):
            t = _validate_stochastic(t, "kernel at vertex %r" % (fnet.vertices[i],))
            if t.shape[0] != fnet.degree(i):
                raise MechanismError("kernel at %r has wrong size"
                                     % (fnet.vertices[i],))
            self.tables.append(t)
        self._cum = [np.cumsum(t, axis=1) for t in self.tables]

    def row_at(self, vertex_index, current):
        return self.tables[vertex_index][current]

    def sample_at(self, vertex_index, current, rng):
        return sample_index(self._cum[vertex_index][current], rng)


class HiddenMechanism:
    """Hidden states with a jump rule, defined at the identity.

    ``kernel`` drives the hidden state, ``jump[s]`` is the distribution of
    the next neighbor (by generator index) once the new state is s.
    """

    def __init__(self, net, states, kernel, jump, label="hidden"):
        self.net = net
        self.states = list(states)
        self.kernel = _validate_stochastic(kernel, "hidden kernel")
        if self.kernel.shape[0] != len(self.states):
            raise MechanismError("hidden kernel does not match state count")
        jump = np.asarray(jump, dtype=float)
        if jump.shape != (len(self.states), len(net.generators)):
            raise MechanismError("jump rule must be (states x neighbors)")
        if (jump < 0).any():
            raise MechanismError("jump probabilities must be nonnegative")
        if np.abs(jump.sum(axis=1) - 1.0).max() > STOCHASTIC_TOL:
            bad = int(np.abs(jump.sum(axis=1) - 1.0).argmax())
            raise MechanismError("jump rule for state %r does not sum to 1"
                                 % (self.states[bad],))
        self.jump = jump
        self.label = label
        self._kernel_cum = np.cumsum(self.kernel, axis=1)
        self._jump_cum = np.cumsum(self.jump, axis=1)

    @property
    def n_states(self):
        return len(self.states)

    def sample_state(self, current_state, rng):
        return sample_index(self._kernel_cum[current_state], rng)

    def sample_jump(self, state, rng):
        return sample_index(self._jump_cum[state], rng)


def expand_hidden(net, hidden):
    """Expand a hidden mechanism into a plain one on a multigraph.

    The expanded graph keeps the vertex set and gains one parallel edge per
    (neighbor, hidden state) pair; out-edge j*m + i stands for the edge
    toward neighbor j carrying state label i.  Returns the multigraph, the
    mechanism with kernel p(s,s') * f(s')(y'), and the projection h mapping
    each out-edge index back to its neighbor index.
    """
    if net.labels_per_edge != 1:
        raise MechanismError("network is already a multigraph")
    m = hidden.n_states
    k = len(net.generators)
    gx = Network(net.kind, net.dimension, net.generators, net.conductances,
                 moduli=net.moduli, labels_per_edge=m)
    kernel = np.zeros((k * m, k * m))
    for i in range(m):
        row = np.zeros(k * m)
        for i2 in range(m):
            for j2 in range(k):
                row[j2 * m + i2] = hidden.kernel[i, i2] * hidden.jump[i2, j2]
        for j in range(k):
            kernel[j * m + i] = row
    mech = Mechanism(gx, kernel, label="expanded:" + hidden.label,
                     factored=(hidden.kernel, hidden.jump))
    h = np.arange(k * m) // m
    return gx, mech, h


def degenerate_hidden(mech):
    """The hidden form of a plain mechanism: states are the out-edges, the
    jump rule is a point mass on the matching neighbor."""
    k = mech.degree
    names = ["edge%d" % i for i in range(k)]
    return HiddenMechanism(mech.net, names, mech.kernel, np.eye(k),
                           label="degenerate:" + mech.label)


# -- the named examples ------------------------------------------------------

def mech_aldous_broder(net):
    """Every row is the conductance-proportional neighbor distribution, so
    the rotor history never influences the walk."""
    mu = net.mu()
    kernel = np.tile(mu, (len(mu), 1))
    return Mechanism(net, kernel, label="aldous_broder")


def mech_rotor_perm(net, permutation):
    """Deterministic rotor update given by a permutation of generator indices."""
    k = len(net.generators)
    perm = [int(p) for p in permutation]
    if sorted(perm) != list(range(k)):
        raise MechanismError("not a permutation of 0..%d" % (k - 1))
    kernel = np.zeros((k, k))
    for i, j in enumerate(perm):
        kernel[i, j] = 1.0
    return Mechanism(net, kernel, label="rotor_perm")


def mech_p_rotor_1d(p):
    """One-dimensional rotor: keep direction with probability p, flip with
    probability 1-p.  Index order (+1, -1)."""
    if not 0.0 <= p <= 1.0:
        raise MechanismError("p must lie in [0, 1]")
    net = make_lattice(1)
    kernel = np.array([[p, 1.0 - p], [1.0 - p, p]])
    return Mechanism(net, kernel, label="p_rotor")


def mech_p_rotor_zd(net, p):
    """Planar rotation rotor on Z^d, d >= 2.

    With the rotor on +-e_i, pick the other axis j uniformly and rotate the
    rotor in the {min(i,j), max(i,j)} plane: counterclockwise with
    probability p, clockwise with probability 1-p.
    """
    if net.kind != "zd" or net.dimension < 2:
        raise MechanismError("p-rotor needs Z^d with d >= 2 "
                             "(use mech_p_rotor_1d in one dimension)")
    if not 0.0 <= p <= 1.0:
        raise MechanismError("p must lie in [0, 1]")
    d = net.dimension
    k = 2 * d
    kernel = np.zeros((k, k))
    share = 1.0 / (d - 1)
    for i in range(d):
        for sign_bit in (0, 1):
            row = 2 * i + sign_bit
            for j in range(d):
                if j == i:
                    continue
                same = 2 * j + sign_bit
                flip = 2 * j + 1 - sign_bit
                if i < j:
                    kernel[row, same] += p * share
                    kernel[row, flip] += (1.0 - p) * share
                else:
                    kernel[row, same] += (1.0 - p) * share
                    kernel[row, flip] += p * share
    return Mechanism(net, kernel, label="p_rotor")


def mech_pq_rotor(net, p, q):
    """Mixture: resample from the neighbor distribution with probability q,
    otherwise apply the p-rotor rotation."""
    if not 0.0 <= q <= 1.0:
        raise MechanismError("q must lie in [0, 1]")
    if net.dimension == 1:
        rotor = mech_p_rotor_1d(p).kernel
    else:
        rotor = mech_p_rotor_zd(net, p).kernel
    ab = mech_aldous_broder(net).kernel
    return Mechanism(net, q * ab + (1.0 - q) * rotor, label="pq_rotor")


def mech_hv(flip):
    """Axis-label walk on Z^2: flip the horizontal/vertical label with the
    given probability, then step uniformly along the new axis."""
    if not 0.0 <= flip <= 1.0:
        raise MechanismError("flip probability must lie in [0, 1]")
    net = make_lattice(2)
    kernel = np.zeros((4, 4))
    for i in range(2):
        for sign_bit in (0, 1):
            row = 2 * i + sign_bit
            j = 1 - i
            kernel[row, 2 * i] += (1.0 - flip) / 2.0
            kernel[row, 2 * i + 1] += (1.0 - flip) / 2.0
            kernel[row, 2 * j] += flip / 2.0
            kernel[row, 2 * j + 1] += flip / 2.0
    return Mechanism(net, kernel, label="hv")


def mech_triangular(net=None):
    """Triangular-lattice rotor: rotate the current rotor by 60, 180, or 300
    degrees counterclockwise, each with probability 1/3."""
    if net is None:
        net = make_triangular()
    if net.kind != "triangular":
        raise MechanismError("triangular mechanism needs the triangular lattice")
    kernel = np.zeros((6, 6))
    for g in range(6):
        for step in (1, 3, 5):
            kernel[g, (g + step) % 6] = 1.0 / 3.0
    return Mechanism(net, kernel, label="triangular")


def mech_pq_cycle(net, p, q):
    """Finite-graph analogue of the p,q-rotor: with probability q resample
    from the neighbor distribution, otherwise shift the rotor index by +1
    (probability p) or -1 in the cyclic generator order."""
    if not 0.0 <= p <= 1.0 or not 0.0 <= q <= 1.0:
        raise MechanismError("p and q must lie in [0, 1]")
    k = net.degree
    fwd = np.zeros((k, k))
    back = np.zeros((k, k))
    for i in range(k):
        fwd[i, (i + 1) % k] = 1.0
        back[i, (i - 1) % k] = 1.0
    ab = mech_aldous_broder(net).kernel
    kernel = q * ab + (1.0 - q) * (p * fwd + (1.0 - p) * back)
    return Mechanism(net, kernel, label="pq_cycle")


def mech_hidden_triangular(net=None):
    """The three-state hidden walk on the triangular lattice.

    State s1 moves to s2 or s3 with equal probability, s2 always to s3, s3
    always to s1.  From s1 the walker jumps uniformly to the neighbors at 0,
    120, 240 degrees; from s2 or s3 uniformly to the neighbors at 60, 180,
    300 degrees.
    """
    if net is None:
        net = make_triangular()
    if net.kind != "triangular":
        raise MechanismError("hidden triangular walk needs the triangular lattice")
    kernel = np.array([
        [0.0, 0.5, 0.5],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0],
    ])
    jump = np.zeros((3, 6))
    jump[0, [0, 2, 4]] = 1.0 / 3.0   # 0, 120, 240 degrees
    jump[1, [1, 3, 5]] = 1.0 / 3.0   # 60, 180, 300 degrees
    jump[2] = jump[1]
    return HiddenMechanism(net, ["s1", "s2", "s3"], kernel, jump,
                           label="hidden_triangular")


def step_kernel(mech, x, current, rng):
    """One local-chain transition: the neighbor following ``current`` at x."""
    net = mech.net
    k = net.generator_index_of_step(x, current)
    k2 = mech.sample(k, rng)
    return net.neighbor(x, k2)


# -- structural condition checks ---------------------------------------------

DEFAULT_CHECK_TOL = 1e-9


def check_T1(mech, net=None, tol=DEFAULT_CHECK_TOL):
    """Is the neighbor distribution stationary for the local chain?"""
    net = net or mech.net
    mu = net.mu()
    if mech.kernel.shape[0] != len(mu):
        raise MechanismError("kernel does not match the network degree")
    return bool(np.abs(mu @ mech.kernel - mu).max() <= tol)


def check_elliptic(mech, net=None):
    """Is every kernel entry strictly positive?"""
    return bool((mech.kernel > 0).all())


def _edge_vectors(net):
    """Embedded displacement of each out-edge (labels repeat their neighbor)."""
    vecs = net.embedded_generators()
    if net.labels_per_edge > 1:
        vecs = np.repeat(vecs, net.labels_per_edge, axis=0)
    return vecs


def check_MG1(mech, net=None, tol=DEFAULT_CHECK_TOL):
    """Does every kernel row have zero mean displacement?"""
    net = net or mech.net
    vecs = _edge_vectors(net)
    means = mech.kernel @ vecs
    return bool(np.linalg.norm(means, axis=1).max() <= tol)


def check_MG2(mech, net=None, tol=DEFAULT_CHECK_TOL):
    """Common per-row step covariance, or None if the rows disagree."""
    net = net or mech.net
    vecs = _edge_vectors(net)
    d = vecs.shape[1]
    covs = np.einsum("rk,ki,kj->rij", mech.kernel, vecs, vecs)
    common = covs.mean(axis=0)
    spread = np.linalg.norm((covs - common).reshape(len(covs), d * d), axis=1)
    if spread.max() > tol:
        return None
    return common


def gamma_matrix(net):
    """Diffusion matrix: the mu-weighted sum of y y^T over the neighbors of
    the origin."""
    vecs = _edge_vectors(net)
    mu = net.mu()
    if net.labels_per_edge > 1:
        mu = np.repeat(mu / net.labels_per_edge, net.labels_per_edge)
    return np.einsum("k,ki,kj->ij", mu, vecs, vecs)
