import json
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from rotorlab import (
    CayleyScope,
    ErgodicTarget,
    ExactScenery,
    Mechanism,
    StatsError,
    StatsReport,
    WalkerState,
    Window,
    WindowScope,
    as_finite_network,
    estimate_diffusion,
    ergodic_fraction,
    frobenius_error,
    make_finite_cayley,
    make_lattice,
    make_triangular,
    martingale_drift,
    mech_aldous_broder,
    mech_p_rotor_zd,
    mech_pq_cycle,
    mech_triangular,
    normality_surrogate,
    run_rwlm,
    sample_wsf_plus,
    scenery_step,
    stationarity_exact,
)


def c5():
    return make_finite_cayley(5, [1, -1])


def run_batch(net, mech, n, trials, seed, radius, margin=1, rotor_fill=0,
              env=None):
    rng_master = np.random.SeedSequence(seed)
    out = []
    for i, ss in enumerate(rng_master.spawn(trials)):
        rng = np.random.default_rng(ss)
        scope = WindowScope(net, Window(radius=radius, margin=margin))
        if env is None:
            rotors = np.full(scope.rotor_size(), rotor_fill, dtype=np.int64)
        else:
            rotors = scope.env_rotors(env, rng)
        state = WalkerState(scope, net.identity, rotors)
        traj = run_rwlm(state, mech, n, rng)
        assert not traj.truncated
        out.append(traj)
    return out


# -- exact stationarity -------------------------------------------------------

def test_stationarity_exact_5cycle():
    net = c5()
    for mech in (mech_aldous_broder(net), mech_pq_cycle(net, 0.3, 0.5)):
        for k in (1, 2, 3):
            assert stationarity_exact(net, mech, k) <= 1e-10


def test_stationarity_exact_biased_kernel_fails():
    net = c5()
    biased = Mechanism(net, np.array([[0.9, 0.1], [0.9, 0.1]]))
    assert stationarity_exact(net, biased, 1) > 0.01


def test_stationarity_exact_matches_monte_carlo_scenery():
    # dual route: empirical one-step scenery distribution against the exact
    # pushforward, which equals the initial law here
    net = c5()
    fnet = as_finite_network(net)
    scope = CayleyScope(net)
    mech = mech_pq_cycle(net, 0.3, 0.5)
    op = ExactScenery(net)
    pi1 = op.push(op.initial_wsf_plus(), mech)

    rng = np.random.default_rng(77)
    n = 30_000
    counts = Counter()
    for _ in range(n):
        rel = sample_wsf_plus(fnet, (0,), rng)
        rel = scenery_step(rel, mech, scope, rng)
        counts[op.encode(rel)] += 1
    support = np.nonzero(pi1 > 1e-15)[0]
    assert set(counts) <= set(int(s) for s in support)
    observed = np.array([counts[int(s)] for s in support])
    assert chisquare(observed, pi1[support] * n).pvalue > 1e-3


# -- diffusion estimation -------------------------------------------------------

def test_estimate_diffusion_aldous_broder_structure():
    net = make_lattice(2)
    trajs = run_batch(net, mech_aldous_broder(net), n=300, trials=60, seed=5,
                      radius=60)
    gamma_hat, err = estimate_diffusion(trajs, net, target=0.5 * np.eye(2))
    # every step outer product is a diagonal unit matrix, so the estimate is
    # exactly diagonal with trace exactly one
    assert gamma_hat[0, 1] == 0.0 and gamma_hat[1, 0] == 0.0
    assert abs(gamma_hat[0, 0] + gamma_hat[1, 1] - 1.0) < 1e-12
    assert err < 0.05


def test_estimate_diffusion_triangular_any_start():
    net = make_triangular()
    trajs = run_batch(net, mech_triangular(net), n=400, trials=120, seed=9,
                      radius=80)
    gamma_hat, err = estimate_diffusion(trajs, net, target=0.5 * np.eye(2))
    assert err < 0.05


def test_estimate_diffusion_input_validation():
    net = make_lattice(2)
    with pytest.raises(StatsError):
        estimate_diffusion([], net)
    t1 = run_batch(net, mech_aldous_broder(net), n=10, trials=1, seed=1,
                   radius=20)[0]
    t2 = run_batch(net, mech_aldous_broder(net), n=20, trials=1, seed=2,
                   radius=30)[0]
    with pytest.raises(StatsError):
        estimate_diffusion([t1, t2], net)


def test_estimate_diffusion_error_scaling():
    # per-entry standard error shrinks like 1/sqrt(trials)
    net = make_lattice(2)
    mech = mech_aldous_broder(net)

    def err_at(trials, seed):
        trajs = run_batch(net, mech, n=100, trials=trials, seed=seed, radius=40)
        gamma_hat, err = estimate_diffusion(trajs, net, target=0.5 * np.eye(2))
        return err

    coarse = np.mean([err_at(20, s) for s in range(6)])
    fine = np.mean([err_at(320, s + 100) for s in range(6)])
    assert fine < coarse / 2.0


# -- ergodic fractions ------------------------------------------------------------

def test_ergodic_fraction_trivial_predicate():
    net = make_lattice(2)
    traj = run_batch(net, mech_aldous_broder(net), n=50, trials=1, seed=3,
                     radius=20)[0]
    always = ErgodicTarget.from_predicate(net, "all", lambda g: True)
    assert ergodic_fraction(traj, always, net) == 1.0
    assert always.value(net) == 1.0


def test_ergodic_fraction_weighted_vertical():
    # the full n = 1e5 protocol runs in the acceptance suite on the fast
    # engine; this covers the estimator and the computed target
    net = make_lattice(2, [1.0, 3.0])
    target = ErgodicTarget.axis(net, 1, "vertical")
    assert target.value(net) == pytest.approx(0.75)
    trajs = run_batch(net, mech_aldous_broder(net), n=2_500, trials=1, seed=21,
                      radius=180, env="wsf_plus")
    frac = ergodic_fraction(trajs[0], target, net)
    assert abs(frac - 0.75) <= 0.02


def test_ergodic_fraction_requires_record():
    net = make_lattice(2)
    traj = run_batch(net, mech_aldous_broder(net), n=0, trials=1, seed=3,
                     radius=5)[0]
    with pytest.raises(StatsError):
        ergodic_fraction(traj, ErgodicTarget.axis(net, 0), net)


# -- drift and normality -----------------------------------------------------------

def test_martingale_drift_passes_at_half():
    net = make_lattice(2)
    mech = mech_p_rotor_zd(net, 0.5)
    trajs = run_batch(net, mech, n=2000, trials=300, seed=13, radius=250,
                      env="iid_uniform")
    gamma = 0.5 * np.eye(2)
    drift, bound, passed = martingale_drift(trajs, net, gamma)
    assert passed
    assert (bound > 0).all()


def test_martingale_drift_zero_steps():
    net = make_lattice(2)
    trajs = run_batch(net, mech_aldous_broder(net), n=0, trials=5, seed=1,
                      radius=5)
    drift, bound, passed = martingale_drift(trajs, net, 0.5 * np.eye(2))
    assert passed
    np.testing.assert_array_equal(drift, [0.0, 0.0])


def test_normality_surrogate_gaussian_calibration():
    rng = np.random.default_rng(2718)
    sample = rng.standard_normal((1000, 2))
    report = normality_surrogate(sample)
    assert report["passed"]


def test_normality_surrogate_degenerate_input():
    with pytest.raises(StatsError):
        normality_surrogate(np.ones((1000, 2)))
    with pytest.raises(StatsError):
        normality_surrogate(np.random.default_rng(0).standard_normal((100, 2)))


# -- report -------------------------------------------------------------------------

def test_stats_report_serializes():
    report = StatsReport(seed=7, n_steps=100, trials=10, abort_rate=0.0,
                         gamma_hat=np.eye(2) / 2, gamma_target=np.eye(2) / 2,
                         frobenius_error=0.0,
                         drift=np.zeros(2), drift_bound=np.ones(2),
                         drift_passed=True,
                         ergodic=[{"name": "vertical", "value": 0.5,
                                   "target": 0.5}],
                         window={"radius": 10, "margin": 1})
    text = json.dumps(report.to_dict(), sort_keys=True)
    back = json.loads(text)
    assert back["seed"] == 7
    assert back["gamma_hat"] == [[0.5, 0.0], [0.0, 0.5]]


def test_frobenius_error():
    assert frobenius_error(np.eye(2), np.eye(2)) == 0.0
    assert frobenius_error(np.zeros((2, 2)), np.eye(2)) == pytest.approx(np.sqrt(2))
