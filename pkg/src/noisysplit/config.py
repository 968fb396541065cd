"""Flat ``section.key=value`` experiment configuration.

Files hold one assignment per line; ``#`` starts a comment. Command-line flags
override file values. Every key has a type and a default in ``SCHEMA``; the
canonical form (sorted keys, normalized values) is hashed to identify a
configuration independently of key order or formatting.
"""
from __future__ import annotations

import hashlib
from typing import Dict

from .errors import ConfigError


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _strs(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _opt_int(text):
    return None if str(text).strip() in ("", "none", "None") else int(text)


def _opt_str(text):
    return None if str(text).strip() in ("", "none", "None", "auto") else str(text).strip()


# key -> (parser, default). Defaults describe the desk-scale blobs experiment.
SCHEMA = {
    "dataset.kind": (str, "blobs"),
    "dataset.n": (int, 10000),
    "dataset.d": (int, 20),
    "dataset.k": (int, 10),
    "dataset.cluster_std": (float, 0.2),
    "dataset.separation": (float, 1.0),
    "dataset.arrangement": (str, "simplex"),
    "dataset.n_test": (int, 5000),
    "dataset.data_dir": (str, "data"),
    "dataset.name": (str, "mnist"),
    "dataset.subset": (_opt_int, None),
    "dataset.val_fraction": (float, 0.1),
    "noise.kind": (str, "symmetric"),
    "noise.rate": (float, 0.4),
    "noise.class_map": (_opt_str, None),
    "noise.instance_std": (float, 0.1),
    "model.hidden": (_ints, (64, 64)),
    "model.activation": (str, "relu"),
    "optim.lr": (float, 0.02),
    "optim.momentum": (float, 0.9),
    "optim.weight_decay": (float, 0.001),
    "optim.lr_decay_epochs": (_ints, (20, 40)),
    "optim.lr_decay_factor": (float, 0.1),
    "optim.norm_epsilon": (float, 1e-12),
    "schedule.c1": (float, 1e-4),
    "schedule.c2": (float, 1.0),
    "schedule.beta2_family": (str, "power"),
    "schedule.constant_level": (float, 1.0),
    "schedule.linear_start": (float, 1.0),
    "schedule.linear_end": (float, 0.0),
    "schedule.linear_epochs": (_opt_int, None),  # None: span the whole run
    "schedule.exp_start": (float, 1.0),
    "schedule.exp_decay": (float, 0.3),
    "schedule.step_start": (float, 1.0),
    "schedule.step_factor": (float, 0.1),
    "schedule.step_interval": (int, 2),
    "train.mode": (str, "full"),
    "train.epochs": (int, 60),
    "train.batch_size": (int, 32),
    "train.gamma_init": (str, "zeros"),
    "train.gamma_scale": (float, 0.0),
    "train.eval_params": (_opt_str, None),
    "experiment.seed": (int, 0),
    "experiment.trials": (int, 5),
    "experiment.out": (str, "runs"),
    "sweep.c2_grid": (_floats, (0.2, 0.6, 1.0, 1.5, 2.0)),
    "schedules.families": (_strs, ("constant", "linear", "power", "exponential", "step")),
    "dump.checkpoint": (_opt_str, None),
}

# keys that change where results go but not what is computed
UNHASHED = {"experiment.out"}


def parse_value(key, text):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    parser = SCHEMA[key][0]
    try:
        return parser(text)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad value {text!r} for {key}: {e}") from None


def parse_text(text) -> Dict[str, object]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = parse_value(key, val)
    return out


def load(path=None, overrides=None) -> Dict[str, object]:
    """Defaults, then the file at ``path``, then ``overrides`` (raw strings or values)."""
    cfg = {k: default for k, (_, default) in SCHEMA.items()}
    if path:
        try:
            with open(path) as f:
                cfg.update(parse_text(f.read()))
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
    for key, val in (overrides or {}).items():
        cfg[key] = parse_value(key, val) if isinstance(val, str) else _check_key(key, val)
    return cfg


def _check_key(key, val):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    return val


def format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(format_value(x) for x in v)
    return str(v)


def canonical(cfg) -> str:
    return "".join(f"{k}={format_value(cfg[k])}\n" for k in sorted(cfg) if k not in UNHASHED)


def config_hash(cfg) -> str:
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()[:16]


def dump(cfg) -> str:
    return "".join(f"{k}={format_value(cfg[k])}\n" for k in sorted(cfg))
