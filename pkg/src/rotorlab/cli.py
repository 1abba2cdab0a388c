"""Command-line front end: seeded, config-driven, reproducible.

Subcommands: sample-forest, run-walk, verify, convert-hidden.  Exit codes:
0 all good, 1 a configured check failed, 2 bad configuration.  Identical
(config, seed) pairs produce byte-identical result files; wall-clock timing
lives only in the manifest, outside the hashed portion.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from collections import Counter

import numpy as np

from . import __version__
from .config import (ConfigError, build_ergodic_targets, build_mechanism,
                     build_network, build_window, load_config)
from .forest import (ForestError, check_forest_invariants,
                     enumerate_spanning_trees, wilson_rooted)
from .mechanism import (HiddenMechanism, check_MG1, check_MG2, check_T1,
                        check_elliptic, expand_hidden)
from .network import NetworkError, Window, as_finite_network, wire
from .runner import assemble_report, run_experiment
from .stats import StatsError, stationarity_exact
from .walk import WalkError, emulate_equivalence


def _fmt(x):
    return "%.17g" % x if isinstance(x, float) else str(x)


def manifest_hash(deterministic):
    blob = json.dumps(deterministic, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(out_dir, command, cfg, seed, counts, started):
    deterministic = {
        "artifact_version": __version__,
        "command": command,
        "config": cfg,
        "master_seed": seed,
        "trial_stream": "SeedSequence((master_seed, trial_index))",
        "counts": counts,
    }
    digest = manifest_hash(deterministic)
    manifest = dict(deterministic)
    manifest["manifest_hash"] = digest
    manifest["timing_seconds"] = round(time.time() - started, 3)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return digest


def write_csv(path, digest, header, rows):
    with open(path, "w") as fh:
        fh.write("# manifest_hash=%s\n" % digest)
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_json(path, digest, payload):
    payload = dict(payload)
    payload["manifest_hash"] = digest
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_out(args):
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        cfg["run"]["trials"] = args.trials
    if getattr(args, "steps", None) is not None:
        cfg["run"]["n_steps"] = args.steps
    return cfg


def cmd_sample_forest(args):
    started = time.time()
    cfg = _load(args)
    out_dir = _resolve_out(args)
    net = build_network(cfg)
    window = build_window(cfg)
    if net.is_finite:
        fnet = as_finite_network(net)
    else:
        if window is None:
            raise ConfigError("lattice networks need a 'window' section")
        fnet = wire(net, window)
    root_cfg = cfg["environment"].get("root")
    if root_cfg is None:
        root = 0
    else:
        root = fnet.index[tuple(root_cfg)]
    seed = cfg["seed"]
    trials = cfg["run"]["trials"]

    counts = Counter()
    first_sample = None
    for i in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        tree = wilson_rooted(fnet, root, rng)
        check_forest_invariants(tree)
        counts[tree.key()] += 1
        if first_sample is None:
            first_sample = tree

    exact = None
    try:
        exact = enumerate_spanning_trees(fnet, root).as_dict()
    except ForestError:
        pass

    digest = write_manifest(out_dir, "sample-forest", cfg, seed,
                            {"samples": trials, "distinct_trees": len(counts)},
                            started)
    keys = sorted(counts)
    rows = []
    for idx, key in enumerate(keys):
        row = [idx, "|".join(str(p) for p in key), counts[key],
               counts[key] / trials]
        if exact is not None:
            row.append(exact.get(key, 0.0))
        rows.append(row)
    header = ["tree_id", "parent_key", "count", "frequency"]
    if exact is not None:
        header.append("exact_probability")
    write_csv(os.path.join(out_dir, "forest_freqs.csv"), digest, header, rows)

    with open(os.path.join(out_dir, "forest_edges.txt"), "w") as fh:
        fh.write("# manifest_hash=%s\n" % digest)
        fh.write("# one block per distinct sampled tree, oriented x -> y\n")
        parent_maps = {key: idx for idx, key in enumerate(keys)}
        for key, idx in sorted(parent_maps.items(), key=lambda kv: kv[1]):
            fh.write("tree %d\n" % idx)
            for i, p in enumerate(key):
                if p >= 0:
                    fh.write("%s -> %s\n" % (fnet.vertices[i], fnet.vertices[p]))
    print("sample-forest: %d samples, %d distinct trees -> %s"
          % (trials, len(counts), out_dir))
    return 0


def cmd_run_walk(args):
    started = time.time()
    cfg = _load(args)
    out_dir = _resolve_out(args)
    net = build_network(cfg)
    if net.is_finite:
        raise ConfigError("run-walk drives lattice windows; use verify or "
                          "sample-forest for finite graphs")
    window = build_window(cfg)
    if window is None:
        raise ConfigError("lattice networks need a 'window' section")
    mech = build_mechanism(cfg, net)
    if isinstance(mech, HiddenMechanism):
        raise ConfigError("run-walk takes a plain mechanism; convert-hidden "
                          "expands hidden ones")
    targets = build_ergodic_targets(cfg, net)
    run = cfg["run"]
    seed = cfg["seed"]
    env_kind = cfg["environment"]["kind"]

    collect_fn = None
    traj_meta = []
    if args.emit_trajectories:
        traj_dir = os.path.join(out_dir, "trajectories")
        os.makedirs(traj_dir, exist_ok=True)

        def collect_fn(i, positions, used, truncated):
            path = os.path.join(traj_dir, "trial_%05d.csv" % i)
            with open(path, "w") as fh:
                fh.write("step," + ",".join("x%d" % (j + 1) for j in
                                            range(net.dimension))
                         + ",used_rotor_index\n")
                for t, row in enumerate(positions):
                    rotor = used[t] if t < len(used) else -1
                    fh.write("%d,%s,%d\n"
                             % (t, ",".join(str(int(c)) for c in row), rotor))
            traj_meta.append((i, int(truncated), len(used)))

    summaries = run_experiment(net, mech, window, env_kind,
                               run["n_steps"], run["trials"], seed,
                               workers=run["workers"], collect=collect_fn)
    report = assemble_report(
        net, summaries, run["n_steps"], seed, window=window,
        ergodic_targets=targets,
        with_normality=bool(cfg.get("normality", run["trials"] >= 500)))
    digest = write_manifest(out_dir, "run-walk", cfg, seed,
                            {"trials": run["trials"], "n_steps": run["n_steps"],
                             "aborted": int(round(report.abort_rate
                                                  * run["trials"]))},
                            started)
    write_json(os.path.join(out_dir, "report.json"), digest, report.to_dict())
    rows = [["frobenius_error", report.frobenius_error],
            ["abort_rate", report.abort_rate],
            ["drift_passed", int(report.drift_passed)]]
    for entry in report.ergodic:
        rows.append(["ergodic_%s" % entry["name"], entry["value"]])
        rows.append(["ergodic_%s_target" % entry["name"], entry["target"]])
    write_csv(os.path.join(out_dir, "summary.csv"), digest,
              ["quantity", "value"], rows)
    if traj_meta:
        write_csv(os.path.join(out_dir, "trajectories", "meta.csv"), digest,
                  ["trial", "truncated", "steps_done"], traj_meta)

    print("run-walk: frobenius_error=%.4f abort_rate=%.4f -> %s"
          % (report.frobenius_error, report.abort_rate, out_dir))

    acceptance = cfg.get("acceptance")
    if acceptance:
        ok = True
        if "frobenius_tol" in acceptance:
            ok &= report.frobenius_error <= acceptance["frobenius_tol"]
        if "abort_cap" in acceptance:
            ok &= report.abort_rate <= acceptance["abort_cap"]
        if acceptance.get("require_drift"):
            ok &= bool(report.drift_passed)
        for entry in report.ergodic:
            tol = acceptance.get("ergodic_tol")
            if tol is not None:
                ok &= abs(entry["value"] - entry["target"]) <= tol
        if not ok:
            print("run-walk: acceptance bounds violated")
            return 1
    return 0


def cmd_verify(args):
    started = time.time()
    cfg = _load(args)
    out_dir = _resolve_out(args)
    net = build_network(cfg)
    mech = build_mechanism(cfg, net)
    requested = cfg.get("checks")
    results = []

    def record(name, passed, detail=""):
        results.append({"check": name, "passed": bool(passed),
                        "detail": detail})
        print("%s %s %s" % ("PASS" if passed else "FAIL", name, detail))

    hidden = mech if isinstance(mech, HiddenMechanism) else None
    plain = mech if hidden is None else None

    def wanted(name, default_on):
        return (name in requested) if requested is not None else default_on

    if plain is not None:
        if wanted("t1", True):
            record("t1", check_T1(plain, net))
        if wanted("elliptic", True):
            record("elliptic", check_elliptic(plain))
        embeddable = net.kind in ("zd", "triangular")
        if wanted("mg1", embeddable):
            if not embeddable:
                raise ConfigError("mg1 needs an embeddable lattice network")
            record("mg1", check_MG1(plain, net))
        if wanted("mg2", embeddable):
            if not embeddable:
                raise ConfigError("mg2 needs an embeddable lattice network")
            gamma = check_MG2(plain, net)
            detail = ("common covariance %s" % gamma.tolist()
                      if gamma is not None else "row covariances differ")
            record("mg2", gamma is not None, detail)
        if wanted("stationarity", net.is_finite):
            if not net.is_finite:
                raise ConfigError("stationarity_exact needs a finite Cayley "
                                  "graph; shrink the network")
            tol = cfg["stationarity_tol"]
            for k in cfg["stationarity_steps"]:
                tv = stationarity_exact(net, plain, k)
                record("stationarity_k%d" % k, tv <= tol, "tv=%.3e" % tv)
    if hidden is not None and wanted("emulation", True):
        window = build_window(cfg) or Window(radius=64, margin=1)
        ok = emulate_equivalence(net, hidden, window,
                                 cfg["emulation_steps"],
                                 seeds=range(cfg["emulation_seeds"]))
        record("emulation", ok,
               "%d seeds x %d steps" % (cfg["emulation_seeds"],
                                        cfg["emulation_steps"]))

    digest = write_manifest(out_dir, "verify", cfg, cfg["seed"],
                            {"checks": len(results)}, started)
    write_json(os.path.join(out_dir, "verify_report.json"), digest,
               {"results": results})
    return 0 if all(r["passed"] for r in results) else 1


def cmd_convert_hidden(args):
    started = time.time()
    cfg = _load(args)
    out_dir = _resolve_out(args)
    net = build_network(cfg)
    mech = build_mechanism(cfg, net)
    if not isinstance(mech, HiddenMechanism):
        raise ConfigError("convert-hidden needs a hidden mechanism section")
    gx, gx_mech, h = expand_hidden(net, mech)
    m = mech.n_states
    labels = []
    for e in range(gx.degree):
        labels.append({
            "edge_index": e,
            "target_neighbor_index": int(h[e]),
            "target_generator": list(net.generators[int(h[e])]),
            "hidden_state": mech.states[e % m],
        })
    digest = write_manifest(out_dir, "convert-hidden", cfg, cfg["seed"],
                            {"edge_labels_per_vertex": gx.degree}, started)
    write_json(os.path.join(out_dir, "gx_network.json"), digest, {
        "labels_per_edge": m,
        "generators": [list(g) for g in net.generators],
        "edge_labels": labels,
        "kernel": gx_mech.kernel.tolist(),
        "projection_h": [int(x) for x in h],
    })
    print("convert-hidden: %d edge labels per vertex -> %s"
          % (gx.degree, out_dir))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="rotorlab",
        description="sampling and verification for walks with rewritten "
                    "rotor environments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=False, steps=False, emit=False):
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        if trials:
            p.add_argument("--trials", type=int, default=None)
        if steps:
            p.add_argument("--steps", type=int, default=None)
        if emit:
            p.add_argument("--emit-trajectories", action="store_true")

    common(sub.add_parser("sample-forest", help="sample oriented forests"),
           trials=True)
    common(sub.add_parser("run-walk", help="run walk trials and estimate"),
           trials=True, steps=True, emit=True)
    common(sub.add_parser("verify", help="structural and stationarity checks"))
    common(sub.add_parser("convert-hidden",
                          help="expand a hidden mechanism to a multigraph"))

    args = parser.parse_args(argv)
    handlers = {
        "sample-forest": cmd_sample_forest,
        "run-walk": cmd_run_walk,
        "verify": cmd_verify,
        "convert-hidden": cmd_convert_hidden,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, NetworkError, StatsError, WalkError,
            ForestError) as err:
        print("config error: %s" % err, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
