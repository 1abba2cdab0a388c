"""Experiment configuration: one JSON file drives every subcommand.

All numeric defaults live here, not in code paths.  A configuration without
an explicit seed is rejected: there are no wall-clock defaults anywhere.
"""

import json

import numpy as np

from .mechanism import (Mechanism, HiddenMechanism, mech_aldous_broder,
                        mech_hidden_triangular, mech_hv, mech_p_rotor_1d,
                        mech_p_rotor_zd, mech_pq_cycle, mech_pq_rotor,
                        mech_rotor_perm, mech_triangular)
from .network import Window, make_finite_cayley, make_lattice, make_triangular
from .stats import ErgodicTarget

DEFAULTS = {
    "run": {"n_steps": 1000, "trials": 100, "workers": 1},
    "environment": {"kind": "wsf_plus"},
    "output": {"format": "csv"},
    "stationarity_steps": [1, 2, 3],
    "stationarity_tol": 1e-10,
    "emulation_seeds": 100,
    "emulation_steps": 50,
}


class ConfigError(ValueError):
    pass


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as err:
        raise ConfigError("cannot read config: %s" % err) from None
    except json.JSONDecodeError as err:
        raise ConfigError("config is not valid JSON: %s" % err) from None
    return validate_config(cfg)


def validate_config(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if "seed" not in cfg:
        raise ConfigError("missing key 'seed' (wall-clock seeding is not allowed)")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("key 'seed' must be an integer")
    if "network" not in cfg:
        raise ConfigError("missing key 'network'")
    out = dict(cfg)
    for key, default in DEFAULTS.items():
        if isinstance(default, dict):
            merged = dict(default)
            merged.update(cfg.get(key, {}))
            out[key] = merged
        else:
            out[key] = cfg.get(key, default)
    run = out["run"]
    for key in ("n_steps", "trials", "workers"):
        if not isinstance(run.get(key), int) or run[key] < 0:
            raise ConfigError("run.%s must be a nonnegative integer" % key)
    if run["trials"] < 1:
        raise ConfigError("run.trials must be at least 1")
    return out


def build_network(cfg):
    sec = cfg.get("network")
    kind = sec.get("type")
    if kind == "lattice":
        lattice = sec.get("lattice", "zd")
        if lattice == "zd":
            if "d" not in sec:
                raise ConfigError("network.d is required for zd lattices")
            return make_lattice(sec["d"], sec.get("conductances", 1.0))
        if lattice == "triangular":
            return make_triangular()
        raise ConfigError("unknown network.lattice %r" % lattice)
    if kind == "finite":
        group = sec.get("group")
        if group == "cycle":
            n = sec.get("n")
            if n is None:
                raise ConfigError("network.n is required for cycle groups")
            gens = sec.get("generators", [1, -1])
            return make_finite_cayley(n, gens, sec.get("conductances", 1.0))
        if group == "torus":
            shape = sec.get("shape")
            if shape is None:
                raise ConfigError("network.shape is required for torus groups")
            gens = sec.get("generators")
            if gens is None:
                d = len(shape)
                gens = []
                for i in range(d):
                    e = [0] * d
                    e[i] = 1
                    gens.append(tuple(e))
                    gens.append(tuple(-c for c in e))
            gens = [tuple(g) for g in gens]
            return make_finite_cayley(tuple(shape), gens,
                                      sec.get("conductances", 1.0))
        if group == "product":
            moduli = sec.get("moduli")
            gens = sec.get("generators")
            if moduli is None or gens is None:
                raise ConfigError("network.moduli and network.generators are "
                                  "required for product groups")
            return make_finite_cayley(tuple(moduli), [tuple(g) for g in gens],
                                      sec.get("conductances", 1.0))
        raise ConfigError("unknown network.group %r" % group)
    raise ConfigError("unknown network.type %r" % kind)


def build_window(cfg):
    sec = cfg.get("window")
    if sec is None:
        return None
    if "radius" not in sec:
        raise ConfigError("window.radius is required")
    return Window(radius=int(sec["radius"]), margin=int(sec.get("margin", 0)))


def build_mechanism(cfg, net):
    sec = cfg.get("mechanism")
    if sec is None:
        raise ConfigError("missing key 'mechanism'")
    kind = sec.get("kind")
    if kind == "aldous_broder":
        return mech_aldous_broder(net)
    if kind == "rotor_perm":
        if "permutation" not in sec:
            raise ConfigError("mechanism.permutation is required for rotor_perm")
        return mech_rotor_perm(net, sec["permutation"])
    if kind == "p_rotor":
        if "p" not in sec:
            raise ConfigError("mechanism.p is required for p_rotor")
        if net.dimension == 1:
            return mech_p_rotor_1d(sec["p"])
        return mech_p_rotor_zd(net, sec["p"])
    if kind == "pq_rotor":
        for key in ("p", "q"):
            if key not in sec:
                raise ConfigError("mechanism.%s is required for pq_rotor" % key)
        return mech_pq_rotor(net, sec["p"], sec["q"])
    if kind == "pq_cycle":
        for key in ("p", "q"):
            if key not in sec:
                raise ConfigError("mechanism.%s is required for pq_cycle" % key)
        return mech_pq_cycle(net, sec["p"], sec["q"])
    if kind == "hv":
        if "flip" not in sec:
            raise ConfigError("mechanism.flip is required for hv")
        return mech_hv(sec["flip"])
    if kind == "triangular":
        return mech_triangular(net)
    if kind == "hidden_triangular":
        return mech_hidden_triangular(net)
    if kind == "custom":
        if "kernel" not in sec:
            raise ConfigError("mechanism.kernel is required for custom")
        return Mechanism(net, np.array(sec["kernel"], dtype=float))
    if kind == "custom_hidden":
        return build_hidden(sec, net)
    raise ConfigError("unknown mechanism.kind %r" % kind)


def build_hidden(sec, net):
    for key in ("states", "kernel", "jump"):
        if key not in sec:
            raise ConfigError("mechanism.%s is required for custom_hidden" % key)
    states = list(sec["states"])
    jump_map = sec["jump"]
    k = len(net.generators)
    jump = np.zeros((len(states), k))
    for i, name in enumerate(states):
        if name not in jump_map:
            raise ConfigError("jump rule for state %r is missing" % name)
        row = jump_map[name]
        if len(row) != k:
            raise ConfigError("jump rule for state %r must list %d "
                              "probabilities" % (name, k))
        jump[i] = row
    return HiddenMechanism(net, states, np.array(sec["kernel"], dtype=float),
                           jump)


def build_ergodic_targets(cfg, net):
    out = []
    for sec in cfg.get("ergodic", []):
        if "axis" not in sec:
            raise ConfigError("ergodic targets need an 'axis' key")
        out.append(ErgodicTarget.axis(net, int(sec["axis"]), sec.get("name")))
    return out
