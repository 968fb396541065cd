"""Experiment drivers behind the CLI subcommands.

All drivers take the flat config dict from :mod:`noisysplit.config` and an output
directory. Trial ``i`` runs with seed ``experiment.seed + i``; within a trial the
dataset, test set, noise, split and training each draw from named substreams of
that seed, so every artifact is a pure function of (config, seed).
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import config as cfgmod
from .data import Dataset, SplitIndices, load_idx_dataset, make_blobs, split_train_val
from .decomp import BETA2_FAMILIES, MODES, OptimizerConfig, ScheduleSpec
from .errors import AuditError, CheckpointError, ConfigError, NoisySplitError
from .mlp import MlpArchitecture, ParamSet, features
from .noise import NoiseSpec, apply_noise, audit, write_sidecar
from .reporting import atomic_write_json, atomic_write_text, format_cell, format_value, mean_std, round6
from .tensor import SeededRng
from .train import METRIC_FIELDS, TrainConfig, TrainResult, train

SUMMARY_VERSION = 1


class TrialFailure(NoisySplitError):
    """A trial raised; carries the seed and keeps the cause's exit code."""

    def __init__(self, seed, cause):
        super().__init__(f"trial with seed {seed} failed: {type(cause).__name__}: {cause}")
        self.seed = seed
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


@dataclass
class TrialData:
    seed: int
    train: Dataset  # noisy labels installed, clean labels kept for diagnostics
    split: SplitIndices
    test: Dataset
    noise_spec: NoiseSpec
    audit: dict


def trial_seeds(cfg) -> List[int]:
    n = cfg["experiment.trials"]
    if n < 1:
        raise ConfigError(f"experiment.trials must be >= 1, got {n}")
    return [cfg["experiment.seed"] + i for i in range(n)]


def noise_spec(cfg, num_classes) -> NoiseSpec:
    return NoiseSpec(cfg["noise.kind"], cfg["noise.rate"], num_classes,
                     cfg["noise.class_map"], cfg["noise.instance_std"])


def load_clean(cfg, seed):
    rng = SeededRng(seed)
    kind = cfg["dataset.kind"]
    if kind == "blobs":
        args = (cfg["dataset.d"], cfg["dataset.k"], cfg["dataset.cluster_std"])
        kw = dict(separation=cfg["dataset.separation"], arrangement=cfg["dataset.arrangement"])
        tr = make_blobs(cfg["dataset.n"], *args, rng.substream("data"), **kw)
        te = make_blobs(cfg["dataset.n_test"], *args, rng.substream("test"),
                        normalize_with=(tr.norm_mean, tr.norm_std), **kw)
        return tr, te
    if kind == "idx":
        return load_idx_dataset(cfg["dataset.data_dir"], cfg["dataset.name"],
                                cfg["dataset.subset"], rng.substream("subset"))
    raise ConfigError(f"unknown dataset.kind {kind!r}; expected 'blobs' or 'idx'")


def build_trial(cfg, seed) -> TrialData:
    tr, te = load_clean(cfg, seed)
    spec = noise_spec(cfg, tr.num_classes)
    rng = SeededRng(seed)
    outcome = apply_noise(spec, tr.clean_labels, rng.substream("noise"), features=tr.features)
    report = audit(outcome, tr.clean_labels, spec)
    noisy = tr.with_noisy_labels(outcome.noisy_labels, tag=f"{spec.kind}{spec.rate:g}")
    split = split_train_val(len(noisy), cfg["dataset.val_fraction"], rng.substream("split"))
    return TrialData(seed, noisy, split, te, spec, report)


def schedule_spec(cfg) -> ScheduleSpec:
    lin = cfg["schedule.linear_epochs"] or cfg["train.epochs"]
    return ScheduleSpec(
        c1=cfg["schedule.c1"], beta2_family=cfg["schedule.beta2_family"], c2=cfg["schedule.c2"],
        constant_level=cfg["schedule.constant_level"],
        linear_start=cfg["schedule.linear_start"], linear_end=cfg["schedule.linear_end"], linear_epochs=lin,
        exp_start=cfg["schedule.exp_start"], exp_decay=cfg["schedule.exp_decay"],
        step_start=cfg["schedule.step_start"], step_factor=cfg["schedule.step_factor"],
        step_interval=cfg["schedule.step_interval"],
    )


def architecture(cfg, input_dim, num_classes) -> MlpArchitecture:
    return MlpArchitecture(input_dim, cfg["model.hidden"], num_classes, cfg["model.activation"])


def train_config(cfg, data: TrialData) -> TrainConfig:
    opt = OptimizerConfig(
        learning_rate=cfg["optim.lr"], momentum=cfg["optim.momentum"],
        weight_decay=cfg["optim.weight_decay"], lr_decay_epochs=cfg["optim.lr_decay_epochs"],
        lr_decay_factor=cfg["optim.lr_decay_factor"], norm_epsilon=cfg["optim.norm_epsilon"],
    )
    return TrainConfig(
        arch=architecture(cfg, data.train.dim, data.train.num_classes),
        optimizer=opt, schedule=schedule_spec(cfg), mode=cfg["train.mode"],
        max_epochs=cfg["train.epochs"], batch_size=cfg["train.batch_size"], seed=data.seed,
        eval_params=cfg["train.eval_params"], gamma_init=cfg["train.gamma_init"],
        gamma_scale=cfg["train.gamma_scale"],
    )


# --- checkpoints -----------------------------------------------------------------

def save_checkpoint(path, params: ParamSet):
    arrays = {}
    for i, (w, b) in enumerate(params.layers):
        arrays[f"W{i}"] = w
        arrays[f"b{i}"] = b
    arrays["activation"] = np.array(params.activation)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path) -> ParamSet:
    try:
        with np.load(path, allow_pickle=False) as z:
            n = sum(1 for k in z.files if k.startswith("W"))
            layers = [(z[f"W{i}"], z[f"b{i}"]) for i in range(n)]
            act = str(z["activation"])
    except (OSError, KeyError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    if not layers:
        raise CheckpointError(f"checkpoint {path} holds no layers")
    return ParamSet(layers, act)


def check_compatible(params: ParamSet, arch: MlpArchitecture):
    want = [(tuple(ws), tuple(bs)) for ws, bs in arch.layer_shapes()]
    if params.shapes() != want or params.activation != arch.activation:
        raise CheckpointError(
            f"checkpoint layers {params.shapes()} ({params.activation}) do not match "
            f"architecture {list(arch.dims)} ({arch.activation})")


# --- summaries -------------------------------------------------------------------

def stat_block(values):
    mean, std = mean_std(values)
    return {"mean": round6(mean), "std": round6(std), "cell": format_cell(mean, std),
            "values": [round6(v) for v in values]}


def summarize(results: Dict[int, TrainResult], cfg) -> dict:
    seeds = sorted(results)
    rs = [results[s] for s in seeds]
    last = [r.per_epoch[-1] for r in rs]
    return {
        "schema_version": SUMMARY_VERSION,
        "config_hash": cfgmod.config_hash(cfg),
        "mode": rs[0].mode,
        "eval_params": rs[0].eval_params,
        "trials": len(rs),
        "seeds": seeds,
        "best_epoch": [r.best_epoch for r in rs],
        "best_test_acc": stat_block([r.best_test_acc for r in rs]),
        "best_val_acc": stat_block([r.best_val_acc for r in rs]),
        "final_test_acc_sigma": stat_block([m.test_acc_sigma for m in last]),
        "final_test_acc_full": stat_block([m.test_acc_full for m in last]),
    }


def manifest(cfg, seeds, paths) -> dict:
    from importlib.metadata import PackageNotFoundError, version

    try:
        pkg = version("noisysplit")
    except PackageNotFoundError:
        pkg = "unknown"
    return {
        "config_hash": cfgmod.config_hash(cfg),
        "seeds": list(seeds),
        "outputs": paths,
        "versions": {"noisysplit": pkg, "numpy": np.__version__, "summary_schema": SUMMARY_VERSION},
    }


@dataclass
class RunSet:
    results: Dict[int, TrainResult]
    summary: dict
    out_dir: str


def run_trials(cfg, out_dir, log=None, data_cache=None, run_cache=None) -> RunSet:
    """Run every trial of ``cfg``; write metrics CSVs, checkpoints, summary and manifest.

    ``data_cache`` (seed -> TrialData) shares datasets between run-sets whose data
    keys agree; ``run_cache`` ((config hash, seed) -> TrainResult) skips trials
    already trained under an identical config. Both are optional, in-memory only.
    """
    seeds = trial_seeds(cfg)
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(out_dir, "config.txt"), cfgmod.dump(cfg))
    h = cfgmod.config_hash(cfg)
    results, paths = {}, {}
    for s in seeds:
        res = run_cache.get((h, s)) if run_cache is not None else None
        if res is None:
            try:
                data = data_cache.get(s) if data_cache is not None else None
                if data is None:
                    data = build_trial(cfg, s)
                    if data_cache is not None:
                        data_cache[s] = data
                res = train(data.train, data.split, data.test, train_config(cfg, data))
            except Exception as e:  # noqa: BLE001 - re-raised with the seed attached
                raise TrialFailure(s, e) from e
            if run_cache is not None:
                run_cache[(h, s)] = res
        metrics = f"seed-{s}.metrics.csv"
        ckpt = f"seed-{s}.best.npz"
        atomic_write_text(os.path.join(out_dir, metrics), res.metrics_csv())
        save_checkpoint(os.path.join(out_dir, ckpt), res.best_params)
        results[s] = res
        paths[str(s)] = {"metrics": metrics, "checkpoint": ckpt}
        if log:
            log(f"seed {s}: best epoch {res.best_epoch}, val {res.best_val_acc:.4f}, "
                f"test {res.best_test_acc:.4f}")
    summary = summarize(results, cfg)
    atomic_write_json(os.path.join(out_dir, "summary.json"), summary)
    atomic_write_json(os.path.join(out_dir, "manifest.json"), manifest(cfg, seeds, paths))
    return RunSet(results, summary, out_dir)


def with_overrides(cfg, **dotted):
    out = dict(cfg)
    for k, v in dotted.items():
        key = k.replace("__", ".")
        if key not in cfgmod.SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = v
    return out


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write_text(path, buf.getvalue())


# --- subcommands -----------------------------------------------------------------

def cmd_gen_noise(cfg, out_dir, log=None) -> dict:
    """Sidecar CSV and audit JSON per trial seed. Raises AuditError on structural violations."""
    os.makedirs(out_dir, exist_ok=True)
    reports = {}
    for s in trial_seeds(cfg):
        data = build_trial(cfg, s)
        write_sidecar(os.path.join(out_dir, f"seed-{s}.noise.csv"),
                      data.train.clean_labels, data.train.noisy_labels)
        atomic_write_json(os.path.join(out_dir, f"seed-{s}.audit.json"), data.audit)
        reports[s] = data.audit
        if log:
            log(f"seed {s}: flip fraction {data.audit['flip_fraction']:.4f}")
        if not data.audit["structure_ok"]:
            raise AuditError(f"noise audit failed for seed {s}: {data.audit['violations'][:3]}", data.audit)
    return reports


def cmd_train(cfg, out_dir, log=None, data_cache=None, run_cache=None) -> RunSet:
    return run_trials(cfg, out_dir, log, data_cache, run_cache)


ABLATION_HEADER = ["mode", "eval_params", "mean", "std", "cell", "trials"]


def cmd_ablate(cfg, out_dir, log=None, data_cache=None, run_cache=None):
    """All four modes on shared seeds; one table row per mode, in fixed order."""
    data_cache = {} if data_cache is None else data_cache
    rows, runs = [], {}
    for mode in MODES:
        rs = run_trials(with_overrides(cfg, **{"train.mode": mode}), os.path.join(out_dir, mode),
                        log, data_cache, run_cache)
        runs[mode] = rs
        b = rs.summary["best_test_acc"]
        rows.append([mode, rs.summary["eval_params"], format_value(b["mean"]), format_value(b["std"]),
                     b["cell"], rs.summary["trials"]])
    write_csv(os.path.join(out_dir, "ablation.csv"), ABLATION_HEADER, rows)
    return rows, runs


SWEEP_HEADER = ["c2", "val_mean", "val_std", "test_mean", "test_std", "test_cell"]


def select_best(values, scores):
    """Index of the highest score, earliest on ties."""
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return values[best]


def cmd_sweep_c2(cfg, out_dir, grid=None, log=None, data_cache=None, run_cache=None):
    grid = tuple(cfg["sweep.c2_grid"] if grid is None else grid)
    if not grid:
        raise ConfigError("c2 grid is empty")
    if any(c < 0 for c in grid):
        raise ConfigError(f"c2 values must be nonnegative, got {grid}")
    data_cache = {} if data_cache is None else data_cache
    runs, rows, scores = {}, [], []
    for c2 in grid:
        sub = with_overrides(cfg, **{"schedule.c2": float(c2), "schedule.beta2_family": "power"})
        rs = run_trials(sub, os.path.join(out_dir, f"c2-{c2:g}"), log, data_cache, run_cache)
        runs[c2] = rs
        v, t = rs.summary["best_val_acc"], rs.summary["best_test_acc"]
        scores.append(v["mean"])
        rows.append([format_value(c2), format_value(v["mean"]), format_value(v["std"]),
                     format_value(t["mean"]), format_value(t["std"]), t["cell"]])
    best = select_best(list(grid), scores)
    write_csv(os.path.join(out_dir, "sweep.csv"), SWEEP_HEADER, rows)
    selection = {"best_c2": best, "criterion": "mean best validation accuracy, earliest on ties",
                 "grid": list(grid), "val_means": scores,
                 "test_mean_at_best": runs[best].summary["best_test_acc"]["mean"]}
    atomic_write_json(os.path.join(out_dir, "selection.json"), selection)
    return selection, runs


SCHEDULE_METRICS = ("beta2", "val_acc", "test_acc")
LONG_HEADER = ["family", "epoch", "metric", "value"]
FAMILY_HEADER = ["family", "val_mean", "val_std", "test_mean", "test_std", "test_cell"]


def cmd_schedules(cfg, out_dir, families=None, log=None, data_cache=None, run_cache=None):
    """One run-set per beta2 family (power always included); long-format curves of means."""
    fams = list(cfg["schedules.families"] if families is None else families)
    bad = [f for f in fams if f not in BETA2_FAMILIES]
    if bad:
        raise ConfigError(f"unknown beta2 families {bad}; expected a subset of {BETA2_FAMILIES}")
    if "power" not in fams:
        fams.append("power")
    fams = [f for f in BETA2_FAMILIES if f in fams]  # canonical order, no duplicates
    data_cache = {} if data_cache is None else data_cache
    runs, rows, long_rows = {}, [], []
    for fam in fams:
        rs = run_trials(with_overrides(cfg, **{"schedule.beta2_family": fam}),
                        os.path.join(out_dir, fam), log, data_cache, run_cache)
        runs[fam] = rs
        v, t = rs.summary["best_val_acc"], rs.summary["best_test_acc"]
        rows.append([fam, format_value(v["mean"]), format_value(v["std"]),
                     format_value(t["mean"]), format_value(t["std"]), t["cell"]])
        results = list(rs.results.values())
        for e in range(len(results[0].per_epoch)):
            ms = [r.per_epoch[e] for r in results]
            vals = {
                "beta2": ms[0].beta2,
                "val_acc": float(np.mean([r.val_acc(m) for r, m in zip(results, ms)])),
                "test_acc": float(np.mean([r.test_acc(m) for r, m in zip(results, ms)])),
            }
            long_rows.extend([fam, e + 1, k, format_value(vals[k])] for k in SCHEDULE_METRICS)
    write_csv(os.path.join(out_dir, "families.csv"), FAMILY_HEADER, rows)
    write_csv(os.path.join(out_dir, "curves.csv"), LONG_HEADER, long_rows)
    return rows, runs


def cmd_dump_features(cfg, out_path, checkpoint: Optional[str] = None):
    """Penultimate-layer activations of the test set for a saved checkpoint."""
    checkpoint = checkpoint or cfg["dump.checkpoint"]
    if not checkpoint:
        raise ConfigError("dump-features needs a checkpoint (dump.checkpoint or --checkpoint)")
    params = load_checkpoint(checkpoint)
    _, te = load_clean(cfg, cfg["experiment.seed"])
    check_compatible(params, architecture(cfg, te.dim, te.num_classes))
    feats = features(params, te.features)
    header = ["index", "label"] + [f"f{j}" for j in range(feats.shape[1])]
    rows = ([i, int(y)] + [format_value(v) for v in row] for i, (y, row) in enumerate(zip(te.clean_labels, feats)))
    write_csv(out_path, header, rows)
    return feats


__all__ = [
    "METRIC_FIELDS", "TrialData", "TrialFailure", "RunSet", "build_trial", "run_trials", "summarize",
    "cmd_gen_noise", "cmd_train", "cmd_ablate", "cmd_sweep_c2", "cmd_schedules", "cmd_dump_features",
    "save_checkpoint", "load_checkpoint", "select_best",
]
