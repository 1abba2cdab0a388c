"""Trial fan-out and report assembly.

Per-trial randomness comes from a stream derived as (master seed, trial
index), so adding trials never perturbs earlier ones and any scheduling of
workers yields bit-identical results.  Reduction runs in trial order.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .mechanism import gamma_matrix
from .network import Window
from .stats import (StatsReport, embed_positions, frobenius_error,
                    martingale_drift, normality_surrogate, StatsError)
from .walk import WalkerState, WindowScope, run_rwlm


@dataclass
class TrialSummary:
    endpoint: np.ndarray
    vv: np.ndarray
    used_counts: np.ndarray
    n_done: int
    truncated: bool
    z_attached: int = 0
    revealed: int = 0


def _summarize(net, basis, positions, used, truncated, z_att=0, revealed=0):
    v = np.diff(positions, axis=0) @ basis
    counts = np.bincount(used, minlength=len(net.generators))
    endpoint = positions[-1] @ basis
    return TrialSummary(endpoint, v.T @ v, counts, len(used), truncated,
                        z_att, revealed)


def _embed_basis(net):
    axes = []
    for i in range(net.dimension):
        e = [0] * net.dimension
        e[i] = 1
        axes.append(net.embed(tuple(e)))
    return np.array(axes)


def run_experiment(net, mech, window, env_kind, n_steps, trials, seed,
                   workers=1, engine="auto", collect=None):
    """Run independent walk trials and return TrialSummary per trial.

    ``collect(trial_index, positions, used, truncated)`` receives every raw
    trajectory when given; that forces single-worker execution so writes
    stay ordered.
    """
    if trials < 1:
        raise StatsError("need at least one trial")
    if engine == "auto":
        engine = ("fast" if net.kind in ("zd", "triangular")
                  and net.labels_per_edge == 1 and mech.factored is None
                  else "python")
    if collect is not None:
        workers = 1
    basis = _embed_basis(net)

    if engine == "fast":
        from .lattice_fast import LatticeEngine

        def worker(indices):
            eng = LatticeEngine(net, window, mech)
            out = []
            for i in indices:
                positions, used, truncated, z_att, revealed = eng.run_trial(
                    eng.trial_seed(seed, i), n_steps, env_kind=env_kind)
                if collect is not None:
                    collect(i, positions, used, truncated)
                out.append((i, _summarize(net, basis, positions, used,
                                          truncated, z_att, revealed)))
            return out
    elif engine == "python":
        def worker(indices):
            out = []
            for i in indices:
                rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
                scope = WindowScope(net, window)
                rotors = scope.env_rotors(env_kind, rng)
                state = WalkerState(scope, net.identity, rotors)
                traj = run_rwlm(state, mech, n_steps, rng)
                if collect is not None:
                    collect(i, traj.positions, traj.used_rotors, traj.truncated)
                out.append((i, _summarize(net, basis, traj.positions,
                                          traj.used_rotors, traj.truncated)))
            return out
    else:
        raise StatsError("unknown engine %r" % engine)

    if workers <= 1:
        results = worker(range(trials))
    else:
        chunks = [range(w, trials, workers) for w in range(workers)]
        results = []
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(worker, chunks):
                results.extend(part)
    results.sort(key=lambda pair: pair[0])
    return [summary for _, summary in results]


def assemble_report(net, summaries, n_steps, seed, window=None,
                    gamma_target=None, ergodic_targets=(), drift_factor=4.0,
                    with_normality=False, extra=None):
    """Reduce trial summaries into a StatsReport.

    Truncated trials are excluded from every estimator; only their count
    enters the report, as the abort rate.
    """
    kept = [s for s in summaries if not s.truncated]
    abort_rate = 1.0 - len(kept) / len(summaries)
    report = StatsReport(
        seed=int(seed), n_steps=int(n_steps), trials=len(summaries),
        abort_rate=abort_rate,
        window=None if window is None else {"radius": window.radius,
                                            "margin": window.margin},
        extra=dict(extra or {}))
    report.extra["kept_trials"] = len(kept)
    report.extra["z_attached_mean"] = (
        float(np.mean([s.z_attached for s in summaries])))
    if not kept:
        raise StatsError("every trial truncated; enlarge the window")

    d = len(kept[0].endpoint)
    vv = np.zeros((d, d))
    for s in kept:
        vv += s.vv
    gamma_hat = vv / (n_steps * len(kept))
    report.gamma_hat = gamma_hat
    if gamma_target is None:
        gamma_target = gamma_matrix(net)
    report.gamma_target = gamma_target
    report.frobenius_error = frobenius_error(gamma_hat, gamma_target)

    ends = np.array([s.endpoint for s in kept])
    drift = ends.mean(axis=0)
    bound = drift_factor * np.sqrt(np.diag(gamma_target) * n_steps / len(kept))
    report.drift = drift
    report.drift_bound = bound
    report.drift_passed = bool((np.abs(drift) <= bound).all())

    mu = net.mu()
    for target in ergodic_targets:
        fractions = [s.used_counts[target.generator_mask].sum() / s.n_done
                     for s in kept]
        report.ergodic.append({
            "name": target.name,
            "value": float(np.mean(fractions)),
            "target": target.value(net),
        })

    if with_normality:
        scaled = ends / np.sqrt(n_steps)
        report.extra["normality"] = {
            k: v for k, v in normality_surrogate(scaled).items()}
    return report
