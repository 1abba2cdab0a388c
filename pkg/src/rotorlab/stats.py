"""Estimators and checks that turn the limit theorems into finite tests.

The strongest check is fully deterministic: on a finite Cayley graph the
forest-plus-one-edge law can be enumerated, pushed through the exact
scenery transition kernel, and compared to itself in total variation.
Everything else is Monte Carlo with explicit standard-error budgets.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from .forest import exact_wsf_plus
from .network import as_finite_network
from .walk import CayleyScope


class StatsError(ValueError):
    pass


def frobenius_error(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


@dataclass
class ErgodicTarget:
    """A predicate over used rotors plus its exact long-run frequency.

    The target value is always computed from the neighbor distribution of
    the origin, never hard-coded.
    """
    name: str
    generator_mask: np.ndarray      # bool per generator index

    @classmethod
    def from_predicate(cls, net, name, predicate):
        mask = np.array([bool(predicate(g)) for g in net.generators])
        return cls(name, mask)

    @classmethod
    def axis(cls, net, axis, name=None):
        """Used rotor moves along the given axis (nonzero component there)."""
        name = name or "axis%d" % axis
        return cls.from_predicate(net, name, lambda g: g[axis] != 0)

    def value(self, net):
        return float(net.mu()[self.generator_mask].sum())


def ergodic_fraction(trajectory, target, net):
    """Fraction of steps whose pre-update rotor satisfies the predicate."""
    used = trajectory.used_rotors
    if len(used) == 0:
        raise StatsError("trajectory carries no used-rotor record")
    gens = used // net.labels_per_edge
    return float(target.generator_mask[gens].mean())


def estimate_diffusion(trajectories, net, target=None):
    """Average outer product of embedded steps over all trials.

    Trajectories must be complete (not truncated) and share one length.
    """
    if not trajectories:
        raise StatsError("no trajectories to estimate from")
    lengths = {t.n_steps for t in trajectories}
    if len(lengths) != 1:
        raise StatsError("trajectories have unequal lengths")
    if any(t.truncated for t in trajectories):
        raise StatsError("truncated trajectories must be excluded first")
    n = lengths.pop()
    if n == 0:
        raise StatsError("need at least one step")
    basis = np.array([net.embed(g) for g in _unit_axes(net)])
    d = basis.shape[1]
    acc = np.zeros((d, d))
    for t in trajectories:
        v = t.displacements() @ basis
        acc += v.T @ v
    gamma_hat = acc / (n * len(trajectories))
    err = frobenius_error(gamma_hat, target) if target is not None else None
    return gamma_hat, err


def _unit_axes(net):
    axes = []
    for i in range(net.dimension):
        e = [0] * net.dimension
        e[i] = 1
        axes.append(tuple(e))
    return axes


def embed_positions(net, positions):
    basis = np.array([net.embed(g) for g in _unit_axes(net)])
    return np.asarray(positions, dtype=float) @ basis


def martingale_drift(trajectories, net, gamma, factor=4.0):
    """Mean endpoint displacement across trials, with a pass/fail band of
    ``factor`` standard errors per coordinate under the target diffusion."""
    if not trajectories:
        raise StatsError("no trajectories")
    lengths = {t.n_steps for t in trajectories}
    if len(lengths) != 1:
        raise StatsError("trajectories have unequal lengths")
    n = lengths.pop()
    ends = embed_positions(
        net, np.array([t.positions[-1] - t.positions[0] for t in trajectories]))
    drift = ends.mean(axis=0)
    bound = factor * np.sqrt(np.diag(gamma) * n / len(trajectories))
    passed = bool((np.abs(drift) <= bound).all())
    return drift, bound, passed


def normality_surrogate(endpoints, skew_tol=0.2, kurt_tol=0.4):
    """Whitened per-coordinate skewness and excess kurtosis of endpoint
    marginals.

    The default bands are a few asymptotic standard errors sqrt(6/T) and
    sqrt(24/T) wide at T = 1000.  Degenerate inputs fail loudly: whitening
    needs a nonsingular covariance.
    """
    x = np.asarray(endpoints, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T, d = x.shape
    if T < 500:
        raise StatsError("need at least 500 endpoints, got %d" % T)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / T
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals.min() <= 1e-12 * max(eigvals.max(), 1.0):
        raise StatsError("singular endpoint covariance; cannot whiten")
    white = centered @ eigvecs @ np.diag(1.0 / np.sqrt(eigvals))
    std = white.std(axis=0)
    z = white / std
    skew = (z ** 3).mean(axis=0)
    kurt = (z ** 4).mean(axis=0) - 3.0
    passed = bool((np.abs(skew) <= skew_tol).all()
                  and (np.abs(kurt) <= kurt_tol).all())
    return {
        "skewness": skew,
        "excess_kurtosis": kurt,
        "skew_tol": skew_tol,
        "kurt_tol": kurt_tol,
        "passed": passed,
    }


# -- exact stationarity --------------------------------------------------------

class ExactScenery:
    """The scenery transition as an exact operator on the full configuration
    space of a finite Cayley graph.

    Configurations are mixed-radix codes over generator indices; one
    precomputed gather per possible walker move makes a pushforward step a
    handful of vectorized additions.
    """

    def __init__(self, net):
        self.net = net
        self.scope = CayleyScope(net)
        n = len(self.scope.vertices)
        k = net.degree
        size = k ** n
        if size > 8_000_000:
            raise StatsError("configuration space too large (%d)" % size)
        self.n, self.k, self.size = n, k, size
        self.strides = np.array([k ** (n - 1 - i) for i in range(n)],
                                dtype=np.int64)
        codes = np.arange(size, dtype=np.int64)
        self.digits = np.empty((size, n), dtype=np.int8)
        for i in range(n):
            self.digits[:, i] = (codes // self.strides[i]) % k
        self.id_digits = self.digits[:, self.scope.identity_index].astype(np.int64)
        # successor code for every configuration and every walker move
        self.succ = np.empty((k, size), dtype=np.int64)
        for y_gen in range(k):
            y = net.generators[y_gen]
            perm = self.scope.permutation(y)
            moved = self.digits[:, perm].astype(np.int64)
            moved[:, self.scope.index[net.inverse(y)]] = y_gen
            self.succ[y_gen] = moved @ self.strides

    def encode(self, slots):
        return int(np.asarray(slots, dtype=np.int64) @ self.strides)

    def initial_wsf_plus(self, root=None):
        fnet = as_finite_network(self.net)
        root = self.scope.identity_index if root is None else root
        dist = exact_wsf_plus(fnet, root)
        pi = np.zeros(self.size)
        for slots, p in dist.entries:
            pi[self.encode(slots)] = p
        return pi

    def push(self, pi, mech):
        out = np.zeros_like(pi)
        for y_gen in range(self.k):
            w = pi * mech.kernel[self.id_digits, y_gen]
            np.add.at(out, self.succ[y_gen], w)
        return out


def stationarity_exact(net, mech, k_steps=1, root=None):
    """Total-variation distance between the forest-plus-edge law and its
    exact image under k scenery steps.

    Zero (up to float accumulation) certifies that the law is preserved by
    the walk as seen from the walker.
    """
    op = ExactScenery(net)
    pi0 = op.initial_wsf_plus(root)
    pi = pi0
    for _ in range(int(k_steps)):
        pi = op.push(pi, mech)
    return 0.5 * float(np.abs(pi - pi0).sum())


# -- report ----------------------------------------------------------------------

@dataclass
class StatsReport:
    """Everything a run needs to be judged and rerun bit-exactly."""
    seed: int
    n_steps: int
    trials: int
    abort_rate: float
    gamma_hat: list = None
    gamma_target: list = None
    frobenius_error: float = None
    drift: list = None
    drift_bound: list = None
    drift_passed: bool = None
    ergodic: list = field(default_factory=list)
    tv_distances: dict = field(default_factory=dict)
    window: dict = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        return _jsonable(out)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x
