"""Compiled trial runner for windowed lattice walks.

The forest environment is sampled lazily: the reversed root branch is drawn
up front, and any other rotor is revealed only when the walker first asks
for it, by running a network random walk to the revealed set (or out of the
window, which counts as reaching the wired vertex) and committing its loop
erasure.  Loop erasure is done by last-exit tracing: after the walk stops,
following the last recorded exit direction from the start retraces exactly
the erased path.  The exit-direction buffer is never cleared; a trace can
only pass through vertices the current walk actually exited, so stale
entries are unreachable.

Randomness is a splitmix64 stream per trial, seeded from the master seed
and the trial index, so results are reproducible across platforms and
unaffected by how trials are scheduled.
"""

import numpy as np
from numba import njit

from .network import lattice_distance
from .mechanism import MechanismError

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True, inline="always")
def _uniform(state):
    state = state + _GAMMA
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return state, float(z >> np.uint64(11)) * _U53


@njit(cache=True, nogil=True, inline="always")
def _pick(cum, u):
    k = 0
    last = cum.shape[0] - 1
    while k < last and u >= cum[k]:
        k += 1
    return k


@njit(cache=True, nogil=True, inline="always")
def _dist(domain, coords):
    if domain == 0:                      # l-infinity box
        m = np.int64(0)
        for j in range(coords.shape[0]):
            a = coords[j] if coords[j] >= 0 else -coords[j]
            if a > m:
                m = a
        return m
    a = coords[0]
    b = coords[1]
    c = a + b
    aa = a if a >= 0 else -a
    ab = b if b >= 0 else -b
    ac = c if c >= 0 else -c
    return (aa + ab + ac) // 2           # hex graph distance


@njit(cache=True, nogil=True)
def _run_window_trial(rotor, exitdir, gen_steps, gen_flat, inv_idx, mu_cum,
                      kernel_cum, domain, radius, margin, env_mode,
                      const_slot, root_flat, n_steps, seed,
                      positions, used):
    d = gen_steps.shape[1]
    k = gen_steps.shape[0]
    state = seed
    x = np.zeros(d, dtype=np.int64)
    w = np.zeros(d, dtype=np.int64)
    qx = np.zeros(d, dtype=np.int64)
    qw = np.zeros(d, dtype=np.int64)
    z_attached = 0
    revealed = 0

    if env_mode == 0:
        # root branch: walk from the root until it leaves the window, then
        # commit its loop erasure with every edge reversed
        cur = root_flat
        for j in range(d):
            x[j] = 0
        while True:
            state, u = _uniform(state)
            g = _pick(mu_cum, u)
            exitdir[cur] = g
            escaped = False
            for j in range(d):
                w[j] = x[j] + gen_steps[g, j]
            if _dist(domain, w) > radius:
                escaped = True
            if escaped:
                break
            cur = cur + gen_flat[g]
            for j in range(d):
                x[j] = w[j]
        cur = root_flat
        for j in range(d):
            x[j] = 0
        while True:
            g = exitdir[cur]
            for j in range(d):
                w[j] = x[j] + gen_steps[g, j]
            if _dist(domain, w) > radius:
                break
            nxt = cur + gen_flat[g]
            rotor[nxt] = inv_idx[g]
            revealed += 1
            cur = nxt
            for j in range(d):
                x[j] = w[j]
        state, u = _uniform(state)
        rotor[root_flat] = _pick(mu_cum, u)
        revealed += 1

    # the walk itself
    cur = root_flat
    for j in range(d):
        x[j] = 0
        positions[0, j] = 0
    truncated = 0
    n_done = 0
    for t in range(n_steps):
        if rotor[cur] < 0:
            if env_mode == 1:
                rotor[cur] = const_slot
            elif env_mode == 2:
                state, u = _uniform(state)
                g = np.int64(u * k)
                if g > k - 1:
                    g = k - 1
                rotor[cur] = g
            else:
                # reveal on demand: walk to the revealed set or out
                qcur = cur
                for j in range(d):
                    qx[j] = x[j]
                while True:
                    state, u = _uniform(state)
                    g = _pick(mu_cum, u)
                    exitdir[qcur] = g
                    stop = False
                    for j in range(d):
                        qw[j] = qx[j] + gen_steps[g, j]
                    if _dist(domain, qw) > radius:
                        stop = True
                    else:
                        nq = qcur + gen_flat[g]
                        if rotor[nq] >= 0:
                            stop = True
                        else:
                            qcur = nq
                            for j in range(d):
                                qx[j] = qw[j]
                    if stop:
                        break
                qcur = cur
                for j in range(d):
                    qx[j] = x[j]
                while True:
                    g = exitdir[qcur]
                    rotor[qcur] = g
                    revealed += 1
                    stop = False
                    for j in range(d):
                        qw[j] = qx[j] + gen_steps[g, j]
                    if _dist(domain, qw) > radius:
                        z_attached += 1
                        stop = True
                    else:
                        nq = qcur + gen_flat[g]
                        if rotor[nq] >= 0:
                            stop = True
                        else:
                            qcur = nq
                            for j in range(d):
                                qx[j] = qw[j]
                    if stop:
                        break
        g_used = rotor[cur]
        used[t] = g_used
        state, u = _uniform(state)
        g_new = _pick(kernel_cum[g_used], u)
        rotor[cur] = g_new
        for j in range(d):
            x[j] = x[j] + gen_steps[g_new, j]
            positions[t + 1, j] = x[j]
        n_done = t + 1
        if _dist(domain, x) > radius - margin:
            truncated = 1
            break
        cur = cur + gen_flat[g_new]
    return n_done, truncated, z_attached, revealed


ENV_MODES = {"wsf_plus": 0, "all_east": 1, "iid_uniform": 2}


class LatticeEngine:
    """Owns the big per-window buffers and drives compiled trials.

    One instance per worker thread; the rotor array is re-initialized per
    trial, the exit-direction buffer deliberately never is.
    """

    def __init__(self, net, window, mech):
        if net.kind not in ("zd", "triangular"):
            raise MechanismError("compiled engine handles lattice windows only")
        if net.labels_per_edge != 1:
            raise MechanismError("compiled engine handles simple graphs only")
        if mech.factored is not None:
            raise MechanismError("hidden-product kernels run on the python engine")
        self.net = net
        self.window = window
        self.mech = mech
        d = net.dimension
        k = len(net.generators)
        self.radius = window.radius
        self.margin = window.margin
        side = 2 * self.radius + 1
        self.side = side
        self.size = side ** d
        self.domain = 0 if net.kind == "zd" else 1
        self.gen_steps = np.array(net.generators, dtype=np.int64)
        strides = np.array([side ** j for j in range(d)], dtype=np.int64)
        self.gen_flat = self.gen_steps @ strides
        self.inv_idx = np.array([net.inverse_generator_index(i) for i in range(k)],
                                dtype=np.int64)
        self.mu_cum = np.cumsum(net.mu())
        self.kernel_cum = np.cumsum(mech.kernel, axis=1)
        self.root_flat = int(self.radius * strides.sum())
        self.rotor = np.empty(self.size, dtype=np.int8)
        self.exitdir = np.zeros(self.size, dtype=np.int8)
        self.d = d

    def trial_seed(self, master_seed, trial_index):
        ss = np.random.SeedSequence((int(master_seed), int(trial_index)))
        return np.uint64(ss.generate_state(1, dtype=np.uint64)[0])

    def run_trial(self, seed, n_steps, env_kind="wsf_plus", const_slot=0):
        env_mode = ENV_MODES[env_kind]
        if env_mode == 0 and self.margin < 1:
            raise MechanismError(
                "forest environments need margin >= 1 so boundary rotors "
                "are never read")
        self.rotor.fill(-1)
        positions = np.zeros((n_steps + 1, self.d), dtype=np.int64)
        used = np.zeros(max(n_steps, 1), dtype=np.int8)
        n_done, truncated, z_att, revealed = _run_window_trial(
            self.rotor, self.exitdir, self.gen_steps, self.gen_flat,
            self.inv_idx, self.mu_cum, self.kernel_cum, self.domain,
            self.radius, self.margin, env_mode, const_slot, self.root_flat,
            n_steps, np.uint64(seed), positions, used)
        return (positions[:n_done + 1], used[:n_done], bool(truncated),
                int(z_att), int(revealed))
