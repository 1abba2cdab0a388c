import numpy as np
import pytest

from rotorlab import (
    CayleyScope,
    FiniteScope,
    HiddenState,
    WalkerState,
    Window,
    WindowScope,
    as_finite_network,
    degenerate_hidden,
    emulate_equivalence,
    lift_hidden_rotors,
    make_finite_cayley,
    make_lattice,
    make_triangular,
    mech_aldous_broder,
    mech_hidden_triangular,
    mech_pq_cycle,
    mech_pq_rotor,
    mech_rotor_perm,
    mech_triangular,
    recentered_rotors,
    run_rwhlm,
    run_rwlm,
    rwhlm_step,
    rwlm_step,
    scenery_step,
)


def window_state(net, radius, margin=0, rotor_fill=0):
    scope = WindowScope(net, Window(radius=radius, margin=margin))
    rotors = np.full(scope.rotor_size(), rotor_fill, dtype=np.int64)
    return WalkerState(scope, net.identity, rotors)


class PairedStream:
    """Reads one uniform, burns a second: aligns a plain walk with the
    two-variate hidden-walk stream."""

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def random(self):
        u = self.rng.random()
        self.rng.random()
        return u


def test_deterministic_swap_step():
    net = make_lattice(1)
    swap = mech_rotor_perm(net, [1, 0])
    state = window_state(net, radius=5)       # all rotors point at +1
    rwlm_step(state, swap, np.random.default_rng(0))
    assert state.position == (-1,)
    assert state.rotors[state.scope.rotor_index((0,))] == 1
    assert state.steps == 1


def test_one_rotor_changes_and_points_at_next_position():
    net = make_lattice(2)
    mech = mech_pq_rotor(net, 0.3, 0.6)
    state = window_state(net, radius=20, margin=1)
    rng = np.random.default_rng(8)
    for _ in range(200):
        before = state.rotors.copy()
        old_pos = state.position
        rwlm_step(state, mech, rng)
        changed = np.nonzero(before != state.rotors)[0]
        assert len(changed) <= 1
        i = state.scope.rotor_index(old_pos)
        assert state.scope.target(old_pos, int(state.rotors[i])) == state.position
        if state.scope.in_margin(state.position):
            break


def test_aldous_broder_step_uniform():
    net = make_lattice(2)
    mech = mech_aldous_broder(net)
    rng = np.random.default_rng(10)
    n = 100_000
    counts = np.zeros(4)
    scope = WindowScope(net, Window(radius=3))
    for _ in range(n):
        state = WalkerState(scope, (0, 0), np.zeros(scope.rotor_size(), dtype=np.int64))
        rwlm_step(state, mech, rng)
        counts[net.generators.index(state.position)] += 1
    se = np.sqrt(0.25 * 0.75 / n)
    assert np.abs(counts / n - 0.25).max() <= 3 * se


def test_run_rwlm_zero_steps():
    net = make_lattice(2)
    traj = run_rwlm(window_state(net, 4), mech_aldous_broder(net), 0,
                    np.random.default_rng(0))
    assert traj.positions.shape == (1, 2)
    assert traj.n_steps == 0
    assert not traj.truncated


def test_consecutive_positions_adjacent():
    net = make_triangular()
    traj = run_rwlm(window_state(net, 40, margin=1), mech_triangular(net), 500,
                    np.random.default_rng(3))
    steps = traj.displacements()
    for s in steps:
        assert tuple(int(c) for c in s) in net.generators


def test_truncation_flag():
    net = make_lattice(1)
    keep_east = mech_rotor_perm(net, [0, 1])   # identity: always repeat exit
    state = window_state(net, radius=4, margin=1)
    traj = run_rwlm(state, keep_east, 100, np.random.default_rng(0))
    assert traj.truncated
    # stops on arriving at distance radius - margin + 1, rotor there unread
    assert traj.n_steps == 4
    assert tuple(traj.positions[-1]) == (4,)


def test_martingale_sample_mean():
    net = make_lattice(2)
    mech = mech_pq_rotor(net, 0.5, 0.5)
    rng = np.random.default_rng(2)
    n, trials = 400, 1000
    total = np.zeros(2)
    for _ in range(trials):
        traj = run_rwlm(window_state(net, 60, margin=1), mech, n, rng)
        assert not traj.truncated
        total += traj.positions[-1]
    mean = total / trials
    # per-coordinate variance is n * 1/2
    bound = 3 * np.sqrt(0.5 * n / trials)
    assert np.abs(mean).max() <= bound


def test_used_rotor_is_pre_update_value():
    net = make_lattice(2)
    mech = mech_aldous_broder(net)
    state = window_state(net, 30, margin=1, rotor_fill=2)
    traj = run_rwlm(state, mech, 50, np.random.default_rng(5))
    assert traj.used_rotors[0] == 2            # the rotor found before resampling


def test_visited_rotors_form_tree_toward_walker():
    net = make_lattice(2)
    mech = mech_pq_rotor(net, 0.4, 0.3)
    scope = WindowScope(net, Window(radius=50, margin=1))
    rng = np.random.default_rng(17)
    rotors = rng.integers(0, 4, size=scope.rotor_size()).astype(np.int64)
    state = WalkerState(scope, (0, 0), rotors)
    visited = {(0, 0)}
    for _ in range(300):
        rwlm_step(state, mech, rng)
        visited.add(state.position)
        for v in visited:
            seen = set()
            cur = v
            while cur != state.position:
                assert cur not in seen
                seen.add(cur)
                cur = scope.target(cur, int(state.rotors[scope.rotor_index(cur)]))


# -- scenery ----------------------------------------------------------------

def test_scenery_step_recenters_to_identity():
    net = make_finite_cayley(5, [1, -1])
    scope = CayleyScope(net)
    mech = mech_aldous_broder(net)
    rng = np.random.default_rng(23)
    rel = rng.integers(0, 2, size=5).astype(np.int64)
    for _ in range(20):
        prev = rel.copy()
        rel = scenery_step(rel, mech, scope, np.random.default_rng(rng.integers(1 << 32)))
        assert rel.shape == prev.shape
    # the vertex Y^-1 points at the identity: its rotor index equals the
    # generator index of Y, which is how the update is written
    rng2 = np.random.default_rng(99)
    rel2 = np.zeros(5, dtype=np.int64)
    out = scenery_step(rel2, mech, scope, rng2)
    # reconstruct Y from a replayed draw
    rng3 = np.random.default_rng(99)
    y_gen = mech.sample(0, rng3)
    y = net.generators[y_gen]
    y_inv = net.inverse(y)
    assert out[scope.index[y_inv]] == y_gen


def test_scenery_equals_translated_walk():
    # identity-started walk, shared stream: rel_n(x) = rho_n(X_n x) exactly
    net = make_finite_cayley((3, 3), [(1, 0), (-1, 0), (0, 1), (0, -1)])
    fnet = as_finite_network(net)
    scope = CayleyScope(net)
    mech = mech_pq_cycle(net, 0.4, 0.5)
    seed = 1234
    rng_walk = np.random.default_rng(seed)
    rng_scen = np.random.default_rng(seed)

    rotors = np.random.default_rng(7).integers(0, 4, size=9).astype(np.int64)
    walk_state = WalkerState(FiniteScope(fnet), scope.identity_index, rotors.copy())
    rel = rotors.copy()

    for n in range(30):
        rwlm_step(walk_state, mech, rng_walk)
        rel = scenery_step(rel, mech, scope, rng_scen)
        x_n = scope.vertices[walk_state.position]
        perm = scope.permutation(x_n)
        np.testing.assert_array_equal(rel, walk_state.rotors[perm])


def test_recentered_rotors_flags_missing():
    net = make_lattice(2)
    state = window_state(net, radius=3)
    state.position = (2, 0)
    shifted, missing = recentered_rotors(state)
    assert missing > 0
    center_flat = state.scope.rotor_index((0, 0))
    src_flat = state.scope.rotor_index((2, 0))
    assert shifted[center_flat] == state.rotors[src_flat]


# -- hidden walks ---------------------------------------------------------------

def test_hidden_triangular_s2_always_to_s3():
    net = make_triangular()
    hidden = mech_hidden_triangular(net)
    scope = WindowScope(net, Window(radius=10, margin=1))
    rng = np.random.default_rng(31)
    for _ in range(50):
        rotors = np.zeros(scope.rotor_size(), dtype=np.int64)
        labels = np.ones(scope.rotor_size(), dtype=np.int64)   # everything s2
        state = HiddenState(scope, (0, 0), rotors, labels)
        rwhlm_step(state, hidden, rng)
        origin = scope.rotor_index((0, 0))
        assert state.labels[origin] == 2                        # s3
        assert state.rotors[origin] in (1, 3, 5)                # N2 angles


def test_hidden_changes_only_departed_vertex():
    net = make_triangular()
    hidden = mech_hidden_triangular(net)
    scope = WindowScope(net, Window(radius=15, margin=1))
    rng = np.random.default_rng(37)
    rotors = np.zeros(scope.rotor_size(), dtype=np.int64)
    labels = np.zeros(scope.rotor_size(), dtype=np.int64)
    state = HiddenState(scope, (0, 0), rotors, labels)
    for _ in range(100):
        old_pos = state.position
        before_l = state.labels.copy()
        before_r = state.rotors.copy()
        rwhlm_step(state, hidden, rng)
        i = scope.rotor_index(old_pos)
        changed_l = np.nonzero(before_l != state.labels)[0]
        changed_r = np.nonzero(before_r != state.rotors)[0]
        assert set(changed_l) <= {i}
        assert set(changed_r) <= {i}
        if state.scope.in_margin(state.position):
            break


def test_hidden_step_consumes_two_variates():
    class Counting:
        def __init__(self):
            self.rng = np.random.default_rng(0)
            self.count = 0

        def random(self):
            self.count += 1
            return self.rng.random()

    net = make_triangular()
    hidden = mech_hidden_triangular(net)
    scope = WindowScope(net, Window(radius=5, margin=1))
    state = HiddenState(scope, (0, 0),
                        np.zeros(scope.rotor_size(), dtype=np.int64),
                        np.full(scope.rotor_size(), 1, dtype=np.int64))
    counter = Counting()
    rwhlm_step(state, hidden, counter)
    assert counter.count == 2        # point-mass hidden draw still burns one


def test_degenerate_hidden_reproduces_plain_walk():
    net = make_triangular()
    mech = mech_triangular(net)
    hidden = degenerate_hidden(mech)
    for seed in range(30):
        scope_a = WindowScope(net, Window(radius=60, margin=1))
        scope_b = WindowScope(net, Window(radius=60, margin=1))
        rotors = np.zeros(scope_a.rotor_size(), dtype=np.int64)
        hidden_state = HiddenState(scope_a, (0, 0), rotors.copy(), rotors.copy())
        plain_state = WalkerState(scope_b, (0, 0), rotors.copy())
        traj_h = run_rwhlm(hidden_state, hidden, 50, np.random.default_rng(seed))
        traj_p = run_rwlm(plain_state, mech, 50, PairedStream(seed))
        np.testing.assert_array_equal(traj_h.positions, traj_p.positions)
        np.testing.assert_array_equal(hidden_state.rotors, plain_state.rotors)


def test_emulation_coupled_trajectories():
    net = make_triangular()
    hidden = mech_hidden_triangular(net)
    assert emulate_equivalence(net, hidden, Window(radius=60, margin=1),
                               n_steps=50, seeds=range(50))


def test_lift_encoding():
    rotors = np.array([2, 0, 5])
    labels = np.array([1, 2, 0])
    lifted = lift_hidden_rotors(rotors, labels, 3)
    np.testing.assert_array_equal(lifted, [7, 2, 15])
    np.testing.assert_array_equal(lifted // 3, rotors)
    np.testing.assert_array_equal(lifted % 3, labels)
