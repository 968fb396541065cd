"""Simulated label noise: symmetric, asymmetric, pairflip and instance-dependent.

Every generator returns a :class:`NoiseOutcome` carrying the flip mask and the
realized (empirical) transition matrix, so the injected noise can be audited.
Conventions:

* symmetric noise never "flips" a label to itself, so the nominal rate equals
  the realized corruption rate;
* pairflip sends class c to (c + 1) mod k;
* instance-dependent noise draws a per-example flip rate from a normal
  distribution truncated to [0, 1], then distributes that mass over the other
  classes through a random per-class linear projection of the features.
"""
from __future__ import annotations

import csv
import re
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import ConfigError, DataError, DimensionError
from .tensor import matmul, softmax

NOISE_KINDS = ("symmetric", "asymmetric", "pairflip", "instance")

# the MNIST convention: 2->7, 5<->6, 3->8
MNIST_CLASS_MAP = "2->7,5<->6,3->8"


def parse_class_map(text) -> List[Tuple[int, int]]:
    """Parse "2->7,5<->6" into directed pairs [(2, 7), (5, 6), (6, 5)]."""
    pairs = []
    for item in filter(None, (s.strip() for s in str(text).split(","))):
        m = re.fullmatch(r"(\d+)\s*(<->|->)\s*(\d+)", item)
        if not m:
            raise ConfigError(f"cannot parse class map entry {item!r}")
        a, arrow, b = int(m.group(1)), m.group(2), int(m.group(3))
        pairs.append((a, b))
        if arrow == "<->":
            pairs.append((b, a))
    return pairs


def format_class_map(pairs) -> str:
    return ",".join(f"{a}->{b}" for a, b in pairs)


def superclass_class_map(groups: Sequence[Sequence[int]]) -> List[Tuple[int, int]]:
    """Each class flips to the next one inside its group, wrapping around."""
    pairs = []
    for g in groups:
        g = list(g)
        if len(g) < 2:
            continue
        pairs.extend((g[i], g[(i + 1) % len(g)]) for i in range(len(g)))
    return pairs


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    rate: float
    num_classes: int
    class_map: Optional[Tuple[Tuple[int, int], ...]] = None
    instance_std: float = 0.1

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError(f"noise rate must lie in [0, 1], got {self.rate}")
        if self.num_classes < 2:
            raise ConfigError("noise needs at least 2 classes")
        if self.class_map is not None:
            cm = self.class_map
            if isinstance(cm, str):
                cm = parse_class_map(cm)
            object.__setattr__(self, "class_map", tuple((int(a), int(b)) for a, b in cm))
        if self.kind == "asymmetric":
            if not self.class_map:
                raise ConfigError("asymmetric noise requires a nonempty class map")
            _map_dict(self.class_map, self.num_classes)
        elif self.class_map:
            raise ConfigError(f"class_map is only valid for asymmetric noise, not {self.kind}")
        if self.kind == "instance" and self.rate >= 1.0:
            raise ConfigError("instance-dependent noise rate must lie in [0, 1)")
        if self.instance_std < 0:
            raise ConfigError("instance_std must be nonnegative")
        if self.kind in ("asymmetric", "pairflip") and self.rate > 0.5:
            warnings.warn(
                f"{self.kind} noise at rate {self.rate} breaks diagonal dominance of the transition matrix",
                stacklevel=2,
            )


@dataclass
class NoiseOutcome:
    noisy_labels: np.ndarray
    flip_mask: np.ndarray
    realized_transition: np.ndarray
    flip_rates: Optional[np.ndarray] = field(default=None, repr=False)  # instance kind only


def _check_rate(rate, upper_open=False):
    ok = 0.0 <= rate < 1.0 if upper_open else 0.0 <= rate <= 1.0
    if not ok:
        raise ConfigError(f"noise rate must lie in [0, {'1)' if upper_open else '1]'}, got {rate}")


def _check_labels(labels, k):
    labels = np.asarray(labels)
    if k < 2:
        raise ConfigError("noise needs at least 2 classes")
    if labels.ndim != 1:
        raise DimensionError(f"labels must be 1-d, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"labels must lie in [0, {k})")
    return labels.astype(np.int64)


def transition_matrix(clean, noisy, k) -> np.ndarray:
    """Row-normalized counts of (clean, noisy) pairs. Rows for absent classes are zero."""
    counts = np.zeros((k, k))
    np.add.at(counts, (clean, noisy), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


def _outcome(clean, noisy, k, flip_rates=None):
    return NoiseOutcome(noisy, noisy != clean, transition_matrix(clean, noisy, k), flip_rates)


def apply_symmetric(labels, rate, k, rng) -> NoiseOutcome:
    _check_rate(rate)
    y = _check_labels(labels, k)
    flip = rng.random(y.size) < rate
    offset = rng.integers(1, k, size=y.size)
    return _outcome(y, np.where(flip, (y + offset) % k, y), k)


def apply_pairflip(labels, rate, k, rng) -> NoiseOutcome:
    _check_rate(rate)
    y = _check_labels(labels, k)
    flip = rng.random(y.size) < rate
    return _outcome(y, np.where(flip, (y + 1) % k, y), k)


def _map_dict(class_map, k):
    targets = {}
    for a, b in class_map:
        if not (0 <= a < k and 0 <= b < k):
            raise ConfigError(f"class map entry {a}->{b} is outside [0, {k})")
        if a == b:
            raise ConfigError(f"class map entry {a}->{b} maps a class to itself")
        if targets.get(a, b) != b:
            raise ConfigError(f"class {a} is mapped to both {targets[a]} and {b}")
        targets[a] = b
    return targets


def apply_asymmetric(labels, rate, class_map, k, rng) -> NoiseOutcome:
    _check_rate(rate)
    y = _check_labels(labels, k)
    if isinstance(class_map, str):
        class_map = parse_class_map(class_map)
    targets = _map_dict(class_map, k)
    lookup = np.arange(k)
    for a, b in targets.items():
        lookup[a] = b
    flip = rng.random(y.size) < rate
    return _outcome(y, np.where(flip, lookup[y], y), k)


def instance_flip_distribution(x, y, projection, q):
    """Noisy-label distribution for one example: q spread by softmax over other classes."""
    s = matmul(np.asarray(x, dtype=np.float64)[None, :], projection)[0]
    s[y] = -np.inf
    p = q * softmax(s)
    p[y] = 1.0 - q
    return p


def apply_instance(features, labels, rate, k, rng, std=0.1) -> NoiseOutcome:
    _check_rate(rate, upper_open=True)
    y = _check_labels(labels, k)
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise DimensionError(f"features of shape {x.shape} do not match {y.size} labels")
    if not np.all(np.isfinite(x)):
        raise DataError("features must be finite")
    n, d = x.shape
    if std > 0:
        lo, hi = (0.0 - rate) / std, (1.0 - rate) / std
        q = stats.truncnorm.rvs(lo, hi, loc=rate, scale=std, size=n, random_state=rng.gen)
    else:
        q = np.full(n, float(rate))
    proj = rng.normal(0.0, 1.0, size=(k, d, k))

    scores = np.empty((n, k))
    for c in range(k):
        idx = np.flatnonzero(y == c)
        if idx.size:
            scores[idx] = matmul(x[idx], proj[c])
    scores[np.arange(n), y] = -np.inf
    probs = q[:, None] * softmax(scores)
    probs[np.arange(n), y] = 1.0 - q

    u = rng.random(n)
    noisy = np.minimum((np.cumsum(probs, axis=1) <= u[:, None]).sum(axis=1), k - 1)
    # guard against round-off leaking past the last nonzero cell
    noisy = np.where(probs[np.arange(n), noisy] > 0, noisy, y)
    return _outcome(y, noisy, k, flip_rates=q)


def apply_noise(spec: NoiseSpec, labels, rng, features=None) -> NoiseOutcome:
    if spec.kind == "symmetric":
        return apply_symmetric(labels, spec.rate, spec.num_classes, rng)
    if spec.kind == "pairflip":
        return apply_pairflip(labels, spec.rate, spec.num_classes, rng)
    if spec.kind == "asymmetric":
        return apply_asymmetric(labels, spec.rate, spec.class_map, spec.num_classes, rng)
    if features is None:
        raise ConfigError("instance-dependent noise needs features")
    return apply_instance(features, labels, spec.rate, spec.num_classes, rng, std=spec.instance_std)


def allowed_cells(spec: NoiseSpec) -> np.ndarray:
    """Boolean k x k mask of transition cells a generator may populate."""
    k = spec.num_classes
    mask = np.eye(k, dtype=bool)
    if spec.kind in ("symmetric", "instance"):
        mask[:] = True
    elif spec.kind == "pairflip":
        mask[np.arange(k), (np.arange(k) + 1) % k] = True
    else:
        for a, b in spec.class_map:
            mask[a, b] = True
    return mask


def audit(outcome: NoiseOutcome, clean_labels, spec: Optional[NoiseSpec] = None) -> dict:
    """Summarize realized noise and check it against the structure of ``spec``."""
    clean = np.asarray(clean_labels).astype(np.int64)
    noisy = np.asarray(outcome.noisy_labels).astype(np.int64)
    if clean.shape != noisy.shape:
        raise DimensionError(f"clean labels {clean.shape} and noisy labels {noisy.shape} differ in length")
    k = spec.num_classes if spec else int(max(clean.max(initial=0), noisy.max(initial=0)) + 1)
    flipped = noisy != clean
    per_class = []
    for c in range(k):
        sel = clean == c
        per_class.append(float(flipped[sel].mean()) if sel.any() else None)
    trans = transition_matrix(clean, noisy, k)

    violations = []
    if not np.array_equal(flipped, np.asarray(outcome.flip_mask, dtype=bool)):
        violations.append("flip mask disagrees with labels")
    if spec is not None:
        bad = (trans > 0) & ~allowed_cells(spec)
        violations.extend(
            f"mass {trans[i, j]:.6g} in disallowed cell ({i},{j})" for i, j in zip(*np.nonzero(bad))
        )
    report = {
        "n": int(clean.size),
        "num_classes": k,
        "flip_fraction": float(flipped.mean()) if clean.size else 0.0,
        "per_class_flip_fraction": per_class,
        "realized_transition": trans.tolist(),
        "structure_ok": not violations,
        "violations": violations,
    }
    if spec is not None:
        report["kind"] = spec.kind
        report["nominal_rate"] = spec.rate
        if spec.class_map:
            report["class_map"] = format_class_map(spec.class_map)
    return report


SIDECAR_HEADER = ["index", "clean", "noisy", "flipped"]


def write_sidecar(path, clean_labels, noisy_labels):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SIDECAR_HEADER)
        for i, (c, n) in enumerate(zip(clean_labels, noisy_labels)):
            w.writerow([i, int(c), int(n), int(c != n)])


def read_sidecar(path):
    """Returns (clean, noisy, flipped) arrays."""
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        if header != SIDECAR_HEADER:
            raise DataError(f"unexpected sidecar header {header}")
        rows = [tuple(int(v) for v in row) for row in r]
    arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
    if not np.array_equal(arr[:, 0], np.arange(len(arr))):
        raise DataError("sidecar indices are not 0..n-1 in order")
    return arr[:, 1], arr[:, 2], arr[:, 3].astype(bool)
