"""Bandit instances, structured-class membership, rewards and pull counts.

Arms are indexed by ``(x, g, h)``: task, representation, predictor. Inside the
numeric kernels a task's arms are flattened to ``a = g * H + h`` so that a
model is a ``(X, G*H)`` matrix.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from numba import njit

from .errors import ConfigError, UsageError

Arm = Tuple[int, int, int]


@dataclass(frozen=True)
class ModelTensor:
    """Immutable grid of Bernoulli means indexed ``[x, g, h]``."""

    means: np.ndarray

    def __post_init__(self):
        arr = np.array(self.means, dtype=np.float64)
        if arr.ndim != 3:
            raise UsageError(f"means must be a 3-d (X, G, H) grid, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise UsageError(f"every dimension must be >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise UsageError("every mean must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "means", arr)

    @property
    def X(self) -> int:
        return self.means.shape[0]

    @property
    def G(self) -> int:
        return self.means.shape[1]

    @property
    def H(self) -> int:
        return self.means.shape[2]

    @property
    def n_arms(self) -> int:
        return self.means.size

    def flat(self) -> np.ndarray:
        """The ``(X, G*H)`` view used by the kernels."""
        return np.ascontiguousarray(self.means.reshape(self.X, self.G * self.H))

    def reduced(self, x: int, g: Optional[int] = None) -> "ModelTensor":
        """Single-task instance whose arms are the predictors of ``g`` in task ``x``.

        With ``g=None`` every ``(g, h)`` pair of the task becomes an arm. The
        result has shape ``(1, A, 1)`` so that each arm is its own representation.
        """
        row = self.means[x] if g is None else self.means[x, g][None, :]
        return ModelTensor(row.reshape(1, -1, 1))

    def to_dict(self) -> dict:
        return {"X": self.X, "G": self.G, "H": self.H, "mu": self.means.tolist()}


@dataclass(frozen=True)
class StructuredVerdict:
    in_class: bool
    best_representation: Optional[int] = None
    best_predictors: Optional[Tuple[int, ...]] = None


@njit(cache=True)
def structure_kernel(mu, G, H, hstar):
    """Shared strict-argmax representation of a flat model, or -1.

    Fills ``hstar`` with the per-task best predictor when the model is in class.
    """
    X, K = mu.shape
    g_common = -1
    for x in range(X):
        best = 0
        unique = True
        for a in range(1, K):
            if mu[x, a] > mu[x, best]:
                best = a
                unique = True
            elif mu[x, a] == mu[x, best]:
                unique = False
        if not unique:
            return -1
        g = best // H
        if x == 0:
            g_common = g
        elif g != g_common:
            return -1
        hstar[x] = best % H
    return g_common


def membership_check(model: ModelTensor) -> StructuredVerdict:
    """Does a unique representation strictly dominate in every task?"""
    hstar = np.zeros(model.X, dtype=np.int64)
    g = structure_kernel(model.flat(), model.G, model.H, hstar)
    if g < 0:
        return StructuredVerdict(False)
    return StructuredVerdict(True, int(g), tuple(int(h) for h in hstar))


def _check_arm(model: ModelTensor, arm: Sequence[int]) -> Arm:
    if len(arm) != 3:
        raise UsageError(f"arm must be an (x, g, h) triple, got {arm!r}")
    x, g, h = (int(v) for v in arm)
    if not (0 <= x < model.X and 0 <= g < model.G and 0 <= h < model.H):
        raise UsageError(f"arm {arm!r} out of range for shape {model.means.shape}")
    return x, g, h


def sample_reward(model: ModelTensor, arm: Sequence[int], rng) -> int:
    """Draw a Bernoulli reward for ``arm``.

    ``rng`` may be a ``numpy.random.Generator`` or a legacy ``RandomState``;
    a uniform draw below the mean is a success, which is the same convention
    the compiled simulation engine uses.
    """
    x, g, h = _check_arm(model, arm)
    u = rng.random() if hasattr(rng, "random") else rng.random_sample()
    return int(u < model.means[x, g, h])


@dataclass
class CountTensor:
    """Per-arm pull counts and reward sums, owned by a single replicate."""

    pulls: np.ndarray
    reward_sums: np.ndarray
    round: int = 0

    @classmethod
    def zeros(cls, X: int, G: int, H: int) -> "CountTensor":
        return cls(np.zeros((X, G, H), dtype=np.int64), np.zeros((X, G, H)), 0)

    @property
    def shape(self):
        return self.pulls.shape

    def empirical_means(self) -> np.ndarray:
        out = np.zeros(self.pulls.shape)
        np.divide(self.reward_sums, self.pulls, out=out, where=self.pulls > 0)
        return out

    def empirical_model(self) -> ModelTensor:
        return ModelTensor(self.empirical_means())

    def copy(self) -> "CountTensor":
        return CountTensor(self.pulls.copy(), self.reward_sums.copy(), self.round)


def update_counts(counts: CountTensor, arm: Sequence[int], reward: int) -> CountTensor:
    """Record one observation in place and return ``counts``."""
    if reward not in (0, 1):
        raise UsageError(f"reward must be 0 or 1, got {reward!r}")
    x, g, h = (int(v) for v in arm)
    counts.pulls[x, g, h] += 1
    counts.reward_sums[x, g, h] += reward
    counts.round += 1
    return counts


def two_task_example() -> ModelTensor:
    """Two tasks, three representations, two predictors; rows 2 and 3 swap across tasks."""
    x1 = [[0.5, 0.45], [0.35, 0.33], [0.1, 0.05]]
    x2 = [[0.5, 0.45], [0.1, 0.05], [0.35, 0.33]]
    return ModelTensor(np.array([x1, x2]))


def model_from_dict(obj: dict) -> ModelTensor:
    """Build a model from ``{"X", "G", "H", "mu"}`` with ``mu[x][g][h]``."""
    if not isinstance(obj, dict):
        raise ConfigError("instance must be a JSON object")
    missing = {"X", "G", "H", "mu"} - obj.keys()
    if missing:
        raise ConfigError(f"instance is missing keys: {sorted(missing)}")
    extra = obj.keys() - {"X", "G", "H", "mu"}
    if extra:
        raise ConfigError(f"instance has unknown keys: {sorted(extra)}")
    dims = []
    for key in ("X", "G", "H"):
        v = obj[key]
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ConfigError(f"{key} must be a positive integer, got {v!r}")
        dims.append(v)
    X, G, H = dims
    if G < 2:
        raise ConfigError("G must be at least 2")
    mu = obj["mu"]
    try:
        ok = (len(mu) == X and all(len(row) == G for row in mu)
              and all(len(cell) == H for row in mu for cell in row))
    except TypeError:
        ok = False
    if not ok:
        raise ConfigError(f"mu is ragged or does not match X={X}, G={G}, H={H}")
    try:
        arr = np.array(mu, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"mu contains non-numeric entries: {exc}") from None
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ConfigError("every entry of mu must lie in [0, 1]")
    return ModelTensor(arr)


def load_instance(path) -> ModelTensor:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read instance file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"instance file {path} is not valid JSON: {exc}") from None
    return model_from_dict(obj)
