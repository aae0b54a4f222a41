"""Finite-state branching Markov processes.

A model is a finite state space ``E = {0, ..., n-1}``, a sub-Markov jump
generator ``q`` for the motion (row-sum deficit is killing to the cemetery),
a branching rate ``gamma`` and, per state, a finite mixture of explicit
offspring configurations.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ModelError

PROB_TOL = 1e-12
MAX_STATES = 64
MAX_CHILDREN = 16

_FIELDS = {"states", "q", "gamma", "offspring"}
_CONFIG_FIELDS = {"p", "children"}


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StateSpace:
    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.labels:
            raise ModelError("state space must be nonempty", field="states")
        if len(set(self.labels)) != len(self.labels):
            raise ModelError("state labels must be distinct", field="states")
        if len(self.labels) > MAX_STATES:
            raise ModelError(
                f"{len(self.labels)} states exceeds the limit of {MAX_STATES}",
                field="states",
            )

    @property
    def n(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True)
class MotionGenerator:
    q: np.ndarray

    def __post_init__(self):
        q = _frozen(self.q)
        object.__setattr__(self, "q", q)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ModelError("q must be a square matrix", field="q")
        if not np.all(np.isfinite(q)):
            raise ModelError("q has non-finite entries", field="q")
        scale = 1.0 + float(np.abs(q).max(initial=0.0))
        for x in range(q.shape[0]):
            row = q[x]
            off = np.delete(row, x)
            if np.any(off < 0):
                raise ModelError(f"negative jump rate in row {x}", state=x, field="q")
            if row[x] > 0:
                raise ModelError(f"positive diagonal entry in row {x}", state=x, field="q")
            if row.sum() > PROB_TOL * scale:
                raise ModelError(f"row {x} sums to a positive value", state=x, field="q")

    @property
    def killing(self) -> np.ndarray:
        """Per-state rate of killing to the cemetery."""
        return np.clip(-self.q.sum(axis=1), 0.0, None)


@dataclass(frozen=True)
class OffspringConfig:
    probability: float
    children: tuple[int, ...]

    def __post_init__(self):
        if not (0.0 <= self.probability <= 1.0) or math.isnan(self.probability):
            raise ModelError(f"probability {self.probability} outside [0, 1]", field="offspring")

    @property
    def size(self) -> int:
        return len(self.children)


@dataclass(frozen=True)
class OffspringLaw:
    configs: tuple[tuple[OffspringConfig, ...], ...]

    @property
    def n_max(self) -> int:
        return max((c.size for per in self.configs for c in per), default=0)

    def __getitem__(self, x: int) -> tuple[OffspringConfig, ...]:
        return self.configs[x]


@dataclass(frozen=True)
class BmpModel:
    space: StateSpace
    motion: MotionGenerator
    gamma: np.ndarray
    offspring: OffspringLaw

    def __post_init__(self):
        gamma = _frozen(self.gamma)
        object.__setattr__(self, "gamma", gamma)
        n = self.space.n
        if self.motion.q.shape != (n, n):
            raise ModelError(f"q has shape {self.motion.q.shape}, expected {(n, n)}", field="q")
        if gamma.shape != (n,):
            raise ModelError(f"gamma has {gamma.size} entries, expected {n}", field="gamma")
        for x in range(n):
            if not (gamma[x] >= 0 and math.isfinite(gamma[x])):
                raise ModelError(f"gamma[{x}] must be finite and >= 0", state=x, field="gamma")
        if len(self.offspring.configs) != n:
            raise ModelError(
                f"offspring has {len(self.offspring.configs)} entries, expected {n}",
                field="offspring",
            )
        for x, per in enumerate(self.offspring.configs):
            for c in per:
                for y in c.children:
                    if not 0 <= y < n:
                        raise ModelError(
                            f"child index {y} out of range in state {x}",
                            state=x, field="offspring",
                        )
            total = sum(c.probability for c in per)
            if not per and gamma[x] == 0:
                continue
            if abs(total - 1.0) > PROB_TOL:
                raise ModelError(
                    f"offspring probabilities of state {x} sum to {total!r}",
                    state=x, field="offspring",
                )
        if self.offspring.n_max > MAX_CHILDREN:
            raise ModelError(
                f"litter size {self.offspring.n_max} exceeds the limit of {MAX_CHILDREN}",
                field="offspring",
            )

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def q(self) -> np.ndarray:
        return self.motion.q

    def to_dict(self) -> dict:
        return {
            "states": list(self.space.labels),
            "q": self.q.tolist(),
            "gamma": self.gamma.tolist(),
            "offspring": [
                [{"p": c.probability, "children": list(c.children)} for c in per]
                for per in self.offspring.configs
            ],
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _normalize(per: list[OffspringConfig]) -> tuple[OffspringConfig, ...]:
    total = sum(c.probability for c in per)
    # leave sums that are off only by summation rounding alone, so reloading is idempotent
    slack = len(per) * np.finfo(float).eps
    if per and slack < abs(total - 1.0) <= PROB_TOL:
        per = [OffspringConfig(c.probability / total, c.children) for c in per]
    return tuple(per)


def build_model(states, q, gamma, offspring) -> BmpModel:
    """Build a validated model from plain Python data.

    ``offspring[x]`` is a sequence of ``(probability, children)`` pairs.
    Probability sums within ``PROB_TOL`` of one are renormalized.
    """
    law = []
    for per in offspring:
        configs = [OffspringConfig(float(p), tuple(int(y) for y in ch)) for p, ch in per]
        law.append(_normalize(configs))
    return BmpModel(
        space=StateSpace(tuple(str(s) for s in states)),
        motion=MotionGenerator(np.asarray(q, dtype=float)),
        gamma=np.asarray(gamma, dtype=float),
        offspring=OffspringLaw(tuple(law)),
    )


def model_from_dict(doc: dict) -> BmpModel:
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    unknown = set(doc) - _FIELDS
    if unknown:
        raise ModelError(f"unknown fields: {sorted(unknown)}")
    missing = _FIELDS - set(doc)
    if missing:
        raise ModelError(f"missing fields: {sorted(missing)}")
    offspring = []
    for x, per in enumerate(doc["offspring"]):
        if not isinstance(per, list):
            raise ModelError(f"offspring entry {x} must be a list", state=x, field="offspring")
        entries = []
        for cfg in per:
            if not isinstance(cfg, dict) or set(cfg) != _CONFIG_FIELDS:
                raise ModelError(
                    f"offspring config of state {x} must have exactly the fields p, children",
                    state=x, field="offspring",
                )
            children = cfg["children"]
            if any(not isinstance(y, int) or isinstance(y, bool) for y in children):
                raise ModelError(f"non-integer child index in state {x}", state=x, field="offspring")
            entries.append((cfg["p"], children))
        offspring.append(entries)
    try:
        return build_model(doc["states"], doc["q"], doc["gamma"], offspring)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"malformed model: {exc}") from exc


def load_model(path) -> BmpModel:
    """Load and validate a model JSON file."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: {exc}") from exc
    return model_from_dict(doc)


def bundled_model(name: str) -> BmpModel:
    """One of the shipped fixtures: ``"yule"`` or ``"two_state"``."""
    return load_model(Path(__file__).parent / "data" / f"{name}.json")


def yule_model(beta: float = 1.0) -> BmpModel:
    return build_model(["x"], [[0.0]], [beta], [[(1.0, [0, 0])]])


def expect_over_configs(
    model: BmpModel, x: int, h: Callable[[tuple[int, ...]], float]
) -> float:
    """Exact offspring expectation ``E_x[h(children)]`` under the mixture law."""
    return float(sum(c.probability * h(c.children) for c in model.offspring[x]))


def mean_offspring_matrix(model: BmpModel) -> np.ndarray:
    n = model.n
    m = np.zeros((n, n))
    for x in range(n):
        for c in model.offspring[x]:
            for y in c.children:
                m[x, y] += c.probability
    return m


def mean_generator(model: BmpModel) -> np.ndarray:
    """Generator ``A`` of the mean semigroup, ``psi_t = exp(tA)``."""
    m = mean_offspring_matrix(model)
    return model.q + model.gamma[:, None] * (m - np.eye(model.n))


def check_h2k(model: BmpModel, k: int) -> float:
    """``sup_x E_x[N^k]`` for the litter size ``N``."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    return max(expect_over_configs(model, x, lambda ch: len(ch) ** k) for x in range(model.n))


def check_h2_geometric(model: BmpModel) -> float:
    """``sup_x E_x[2^N]``; finite for any finite mixture, reported for the record."""
    return max(expect_over_configs(model, x, lambda ch: 2.0 ** len(ch)) for x in range(model.n))


def litter_size_means(model: BmpModel) -> np.ndarray:
    return np.array([expect_over_configs(model, x, len) for x in range(model.n)])


def state_index(model: BmpModel, ref: str | int) -> int:
    """Resolve a state given either as label or as 0-based index."""
    if isinstance(ref, str):
        if ref in model.space.labels:
            return model.space.index(ref)
        try:
            ref = int(ref)
        except ValueError:
            raise ModelError(f"unknown state {ref!r}") from None
    if not 0 <= ref < model.n:
        raise ModelError(f"state index {ref} out of range")
    return ref


def to_vector(values: Sequence[float] | str, n: int) -> np.ndarray:
    """Parse a test function given as a sequence or comma-separated string."""
    if isinstance(values, str):
        values = [float(v) for v in values.split(",") if v.strip()]
    f = np.asarray(values, dtype=float)
    if f.shape != (n,):
        raise ValueError(f"function has {f.size} entries, expected {n}")
    return f
