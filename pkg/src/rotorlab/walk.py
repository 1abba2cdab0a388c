"""Walk engines: the rotor-rewriting walk, its scenery process, and the
hidden-state variant.

A step reads the rotor at the walker's position, resamples it through the
mechanism kernel, writes it back, and moves along the new rotor.  Rotors are
stored as out-edge indices in dense arrays: indexed by vertex for finite
networks, by flattened window offset for lattice windows.  Exactly one rotor
changes per step.

Walks on a window are aborted (flagged truncated, not failed) as soon as the
walker enters the margin ring, so the sampled environment's law is never
patched up on the fly.
"""

from dataclasses import dataclass, field

import numpy as np

from .network import lattice_distance, window_vertices
from .forest import sample_wsf_plus, sample_wsf_plus_window


class WalkError(ValueError):
    pass


class FiniteScope:
    """Walk bookkeeping on a FiniteNetwork; positions are vertex indices."""

    def __init__(self, fnet):
        self.fnet = fnet

    def rotor_size(self):
        return len(self.fnet)

    def rotor_index(self, x):
        return x

    def target(self, x, slot):
        return self.fnet.target(x, slot)

    def degree(self, x):
        return self.fnet.degree(x)

    def in_margin(self, x):
        return False

    def position_record(self, x):
        return x

    def kernel_site(self, x):
        return x

    def env_rotors(self, kind, rng, root=None):
        n = len(self.fnet)
        if kind == "all_east":
            return np.zeros(n, dtype=np.int64)
        if kind == "iid_uniform":
            return np.array([rng.integers(self.fnet.degree(i)) for i in range(n)],
                            dtype=np.int64)
        if kind == "wsf_plus":
            root = 0 if root is None else root
            return sample_wsf_plus(self.fnet, root, rng)
        raise WalkError("unknown environment kind %r" % kind)


class WindowScope:
    """Walk bookkeeping on a lattice window with dense flat rotor storage.

    Multigraphs store the out-edge label index; the neighbor actually
    stepped to is label // labels_per_edge.
    """

    def __init__(self, net, window):
        self.net = net
        self.window = window
        self.center = window.center_for(net)
        self.radius = window.radius
        self.margin = window.margin
        self.side = 2 * self.radius + 1
        d = net.dimension
        self.strides = [self.side ** j for j in range(d)]
        self.labels = net.labels_per_edge

    def rotor_size(self):
        return self.side ** self.net.dimension

    def rotor_index(self, x):
        flat = 0
        for j, (c, ctr) in enumerate(zip(x, self.center)):
            o = c - ctr + self.radius
            if o < 0 or o >= self.side:
                raise WalkError("position %r left the stored window" % (x,))
            flat += o * self.strides[j]
        return flat

    def target(self, x, slot):
        return self.net.neighbor(x, slot // self.labels)

    def degree(self, x):
        return self.net.degree

    def in_margin(self, x):
        return lattice_distance(self.net, x, self.center) > self.radius - self.margin

    def position_record(self, x):
        return x

    def kernel_site(self, x):
        return 0

    def env_rotors(self, kind, rng, root=None):
        n = self.rotor_size()
        if kind == "all_east":
            return np.zeros(n, dtype=np.int64)
        if kind == "iid_uniform":
            return rng.integers(0, self.net.degree, size=n).astype(np.int64)
        if kind == "wsf_plus":
            if self.labels != 1:
                raise WalkError("forest environments need a simple graph")
            slots, _ = sample_wsf_plus_window(self.net, self.window, rng,
                                              root=root)
            rotors = np.zeros(n, dtype=np.int64)
            for v, s in zip(window_vertices(self.net, self.window), slots):
                rotors[self.rotor_index(v)] = s
            return rotors
        raise WalkError("unknown environment kind %r" % kind)


@dataclass
class WalkerState:
    scope: object
    position: object
    rotors: np.ndarray
    steps: int = 0
    truncated: bool = False


@dataclass
class HiddenState:
    scope: object
    position: object
    rotors: np.ndarray
    labels: np.ndarray
    steps: int = 0
    truncated: bool = False


@dataclass
class Trajectory:
    """Recorded walk: positions (length n+1) and, per step, the rotor found
    at the walker's position before it was resampled."""
    positions: np.ndarray
    used_rotors: np.ndarray
    truncated: bool

    @property
    def n_steps(self):
        return len(self.used_rotors)

    def displacements(self):
        return np.diff(self.positions, axis=0)


def rwlm_step(state, mech, rng):
    """One transition: resample the rotor at the walker, then follow it.

    Mutates and returns the state; exactly one rotor changes.
    """
    x = state.position
    i = state.scope.rotor_index(x)
    cur = int(state.rotors[i])
    new = mech.sample_at(state.scope.kernel_site(x), cur, rng)
    state.rotors[i] = new
    state.position = state.scope.target(x, new)
    state.steps += 1
    return state


def rwhlm_step(state, hidden, rng):
    """One hidden-walk transition.

    Consumes two variates in fixed order: the hidden-state draw, then the
    jump draw; point masses still burn theirs.  Only the departed vertex's
    hidden label and rotor change.
    """
    x = state.position
    i = state.scope.rotor_index(x)
    k_new = hidden.sample_state(int(state.labels[i]), rng)
    y_gen = hidden.sample_jump(k_new, rng)
    state.labels[i] = k_new
    state.rotors[i] = y_gen
    state.position = state.scope.target(x, y_gen)
    state.steps += 1
    return state


def _positions_buffer(scope, n_steps):
    if isinstance(scope, WindowScope):
        return np.zeros((n_steps + 1, scope.net.dimension), dtype=np.int64)
    return np.zeros(n_steps + 1, dtype=np.int64)


def run_rwlm(state, mech, n_steps, rng):
    """Iterate rwlm_step, recording the trajectory.

    Stops early with the truncated flag once the walker enters the window
    margin; truncation is an outcome, not an error.
    """
    positions = _positions_buffer(state.scope, n_steps)
    used = np.zeros(n_steps, dtype=np.int64)
    positions[0] = state.scope.position_record(state.position)
    done = 0
    for t in range(n_steps):
        i = state.scope.rotor_index(state.position)
        used[t] = state.rotors[i]
        rwlm_step(state, mech, rng)
        positions[t + 1] = state.scope.position_record(state.position)
        done = t + 1
        if state.scope.in_margin(state.position):
            state.truncated = True
            break
    return Trajectory(positions[:done + 1], used[:done], state.truncated)


def run_rwhlm(state, hidden, n_steps, rng):
    positions = _positions_buffer(state.scope, n_steps)
    used = np.zeros(n_steps, dtype=np.int64)
    positions[0] = state.scope.position_record(state.position)
    done = 0
    for t in range(n_steps):
        i = state.scope.rotor_index(state.position)
        used[t] = state.rotors[i]
        rwhlm_step(state, hidden, rng)
        positions[t + 1] = state.scope.position_record(state.position)
        done = t + 1
        if state.scope.in_margin(state.position):
            state.truncated = True
            break
    return Trajectory(positions[:done + 1], used[:done], state.truncated)


# -- scenery process ----------------------------------------------------------

class CayleyScope:
    """Finite Cayley graph with cached translation permutations.

    Rotor arrays are indexed by the vertex order of ``net.vertices()`` and
    hold generator indices, so translating a configuration is a pure gather.
    """

    def __init__(self, net):
        if not net.is_finite:
            raise WalkError("scenery arrays need a finite Cayley graph")
        self.net = net
        self.vertices = net.vertices()
        self.index = {v: i for i, v in enumerate(self.vertices)}
        self.identity_index = self.index[net.identity]
        self._perms = {}

    def permutation(self, g):
        """perm[i] = index of g * v_i."""
        if g not in self._perms:
            self._perms[g] = np.array(
                [self.index[self.net.translate(g, v)] for v in self.vertices],
                dtype=np.int64)
        return self._perms[g]


def scenery_step(rel, mech, scope, rng):
    """One step of the environment as seen from the walker.

    Draws the walker's move from the kernel row of the rotor at the origin
    (one variate, exactly as rwlm_step would), then recenters: the new
    configuration is x -> rel(Y x), except that Y^-1 now points at the
    origin.
    """
    cur = int(rel[scope.identity_index])
    y_gen = mech.sample(cur, rng)
    y = scope.net.generators[y_gen]
    out = rel[scope.permutation(y)]
    out[scope.index[scope.net.inverse(y)]] = y_gen
    return out


def recentered_rotors(state):
    """The window rotor array shifted so the walker sits at the center.

    Cells whose preimage falls outside the stored window are marked -1 and
    counted; callers flag trials where the walk actually needed them.
    """
    scope = state.scope
    if not isinstance(scope, WindowScope):
        raise WalkError("recentering applies to windowed walks")
    net = scope.net
    shift = tuple(p - c for p, c in zip(state.position, scope.center))
    out = np.full(scope.rotor_size(), -1, dtype=np.int64)
    missing = 0
    for v in window_vertices(net, scope.window):
        src = net.translate(v, shift)
        try:
            out[scope.rotor_index(v)] = state.rotors[scope.rotor_index(src)]
        except WalkError:
            missing += 1
    return out, missing


# -- hidden-walk emulation ------------------------------------------------------

def lift_hidden_rotors(rotors, labels, n_states):
    """Initial multigraph rotor config e(x, rotor(x), label(x))."""
    return rotors * n_states + labels


def emulate_equivalence(net, hidden, window, n_steps, seeds,
                        init_rotor=0, init_label=0, start=None):
    """Do the hidden walk and its multigraph expansion walk coincide?

    Both walks consume one (state draw, jump draw) variate pair per step
    from identically seeded streams, so their trajectories must agree
    step for step; any mismatch returns False.
    """
    from .mechanism import expand_hidden

    gx, gx_mech, h = expand_hidden(net, hidden)
    m = hidden.n_states
    start = net.identity if start is None else start
    for seed in seeds:
        scope_h = WindowScope(net, window)
        scope_x = WindowScope(gx, window)
        n = scope_h.rotor_size()
        rotors = np.full(n, init_rotor, dtype=np.int64)
        labels = np.full(n, init_label, dtype=np.int64)
        hidden_state = HiddenState(scope_h, start, rotors.copy(), labels.copy())
        lifted = WalkerState(scope_x, start,
                             lift_hidden_rotors(rotors, labels, m))
        rng_h = np.random.default_rng(np.random.SeedSequence((seed, 0)))
        rng_x = np.random.default_rng(np.random.SeedSequence((seed, 0)))
        traj_h = run_rwhlm(hidden_state, hidden, n_steps, rng_h)
        traj_x = run_rwlm(lifted, gx_mech, n_steps, rng_x)
        if traj_h.truncated or traj_x.truncated:
            raise WalkError("emulation window too small for %d steps" % n_steps)
        if not np.array_equal(traj_h.positions, traj_x.positions):
            return False
        if not np.array_equal(hidden_state.rotors, lifted.rotors // m):
            return False
        if not np.array_equal(hidden_state.labels, lifted.rotors % m):
            return False
    return True
