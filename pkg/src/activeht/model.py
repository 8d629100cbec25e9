"""Gaussian sensing environments: hypotheses, actions, densities, divergences.

An environment is a finite set of hypotheses, a finite set of sensing
actions, and a mean matrix (actions as rows, hypotheses as columns).
Selecting action ``a`` when hypothesis ``h`` is true yields one draw from
``Normal(means[a][h], sigma**2)``.  Everything downstream (likelihoods,
pairwise divergences, allocation oracles) is determined by this matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class ModelError(ValueError):
    """Base class for environment construction failures."""


class MalformedDocumentError(ModelError):
    """The environment document is missing fields or has bad shapes/values."""


class IdentifiabilityError(ModelError):
    """Some hypothesis pair cannot be distinguished by any action."""


@dataclass(frozen=True)
class Environment:
    """Immutable problem instance.

    Attributes:
        name: human-readable label, carried into result tables.
        means: per-action observation means, ``means[a][h]``; tuple of rows.
        sigma: common observation noise standard deviation (> 0).
    """

    name: str
    means: tuple[tuple[float, ...], ...]
    sigma: float = 1.0

    def __post_init__(self):
        if not self.means or not self.means[0]:
            raise MalformedDocumentError("means matrix must be non-empty")
        width = len(self.means[0])
        if any(len(row) != width for row in self.means):
            raise MalformedDocumentError("means matrix rows have unequal lengths")
        if not all(np.isfinite(x) for row in self.means for x in row):
            raise MalformedDocumentError("means matrix contains non-finite entries")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise MalformedDocumentError(f"sigma must be positive, got {self.sigma}")

    @property
    def num_actions(self) -> int:
        return len(self.means)

    @property
    def num_hypotheses(self) -> int:
        return len(self.means[0])

    @cached_property
    def means_array(self) -> np.ndarray:
        arr = np.array(self.means, dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def kl_table(self) -> "KlTable":
        """Precomputed d_a(h, g) for all triples; built once per environment."""
        mu = self.means_array
        gaps = mu[:, :, None] - mu[:, None, :]
        values = gaps**2 / (2.0 * self.sigma**2)
        values.setflags(write=False)
        return KlTable(values=values)

    @cached_property
    def max_divergence(self) -> np.ndarray:
        """max over actions of d_a(h, g); zero entries mark indistinct pairs."""
        out = self.kl_table.values.max(axis=0)
        out.setflags(write=False)
        return out

    @cached_property
    def best_action(self) -> np.ndarray:
        """argmax over actions of d_a(h, g), lowest action index on ties."""
        out = self.kl_table.values.argmax(axis=0)
        out.setflags(write=False)
        return out

    def indistinguishable_pairs(self) -> list[tuple[int, int]]:
        """Hypothesis pairs (h < g) with zero divergence under every action."""
        maxd = self.max_divergence
        k = self.num_hypotheses
        return [(h, g) for h in range(k) for g in range(h + 1, k) if maxd[h][g] == 0.0]


@dataclass(frozen=True)
class KlTable:
    """Action-wise divergence tensor, ``values[a][h][g]`` in nats per draw."""

    values: np.ndarray


def kl(env: Environment, a: int, h: int, g: int) -> float:
    """Per-observation information of action ``a`` for telling h from g.

    Equal-variance Gaussian closed form: squared mean gap over 2*sigma^2.
    """
    _check_action(env, a)
    _check_hypothesis(env, h)
    _check_hypothesis(env, g)
    gap = env.means[a][h] - env.means[a][g]
    return gap * gap / (2.0 * env.sigma**2)


def log_density(env: Environment, a: int, h: int, o: float) -> float:
    """Observation log-density up to a hypothesis-independent constant.

    Returns -(o - mu)^2 / (2 sigma^2).  The additive -log(sigma*sqrt(2*pi))
    term is dropped: every consumer takes differences across hypotheses, so
    constants cancel exactly.
    """
    _check_action(env, a)
    _check_hypothesis(env, h)
    if not np.isfinite(o):
        raise ValueError(f"non-finite observation: {o}")
    gap = o - env.means[a][h]
    return -gap * gap / (2.0 * env.sigma**2)


def sample_observation(env: Environment, a: int, h: int, rng: np.random.Generator) -> float:
    """One draw from the observation law of (a, h).

    Consumes exactly one standard-normal variate from ``rng``; identical
    generator state gives an identical draw.
    """
    _check_action(env, a)
    _check_hypothesis(env, h)
    return env.means[a][h] + env.sigma * rng.standard_normal()


def _check_action(env: Environment, a: int) -> None:
    if not 0 <= a < env.num_actions:
        raise IndexError(f"action index {a} out of range [0, {env.num_actions})")


def _check_hypothesis(env: Environment, h: int) -> None:
    if not 0 <= h < env.num_hypotheses:
        raise IndexError(f"hypothesis index {h} out of range [0, {env.num_hypotheses})")


# Built-in benchmark environments.  Rows are actions, columns are hypotheses.
# "degenerate" intentionally ships with hypotheses 3 and 4 indistinguishable
# under every action (and two fully uninformative action rows): recommending
# either of them is impossible, but identifying any other hypothesis remains
# well-posed, which is exactly the stress it exists to apply.
_PRESET_TABLES: dict[str, tuple[tuple[float, ...], ...]] = {
    "skewed": (
        (0.5, 0.9, 0.5, 0.3, 0.7),
        (0.3, 0.5, 0.3, 0.5, 0.3),
        (0.5, 0.2, 0.5, 0.3, 0.8),
        (0.7, 0.3, 0.7, 0.1, 0.5),
        (0.4, 0.6, 0.6, 0.4, 0.2),
    ),
    "hard-weak": (
        (0.9, 0.8, 0.2, 0.2, 0.2),
        (0.8, 0.65, 0.2, 0.2, 0.2),
        (0.1, 0.1, 0.8, 0.1, 0.1),
        (0.2, 0.2, 0.1, 0.8, 0.2),
        (0.1, 0.2, 0.1, 0.2, 0.9),
    ),
    "degenerate": (
        (0.5, 0.9, 0.1, 0.5, 0.5),
        (0.5, 0.1, 0.9, 0.5, 0.5),
        (0.5, 0.5, 0.5, 0.5, 0.5),
        (0.5, 0.5, 0.5, 0.5, 0.5),
        (0.55, 0.45, 0.45, 0.45, 0.45),
    ),
}

PRESET_NAMES = tuple(sorted(_PRESET_TABLES))


def preset_environment(name: str) -> Environment:
    """One of the built-in environments, by name."""
    try:
        table = _PRESET_TABLES[name]
    except KeyError:
        raise MalformedDocumentError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        ) from None
    return Environment(name=name, means=table, sigma=1.0)


def load_environment(source, strict: bool = True) -> Environment:
    """Build a validated Environment from a preset name, file, dict, or JSON text.

    The document format is a JSON object with fields ``name``, ``means``
    (actions as rows) and optional ``sigma`` (default 1.0).

    With ``strict=True`` (the default for user documents), any hypothesis
    pair with identical mean columns is rejected, since no sensing action
    could ever separate the two.  Presets are trusted and load as published;
    set ``strict=False`` to accept user documents with the same structure as
    the degenerate preset.  A hypothesis indistinguishable from *every*
    other hypothesis is rejected unconditionally.
    """
    if isinstance(source, Environment):
        env = source
    elif isinstance(source, str) and source in _PRESET_TABLES:
        return preset_environment(source)
    else:
        env = _environment_from_document(_read_document(source))
    _validate_identifiability(env, strict=strict)
    return env


def _read_document(source) -> dict:
    if isinstance(source, dict):
        return source
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        path = Path(source)
        if not path.exists():
            raise MalformedDocumentError(
                f"{source!r} is neither a preset name nor an existing file"
            )
        text = path.read_text()
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocumentError(f"invalid environment document: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedDocumentError("environment document must be a JSON object")
    return doc


def _environment_from_document(doc: dict) -> Environment:
    if "means" not in doc:
        raise MalformedDocumentError("environment document lacks a 'means' field")
    means = doc["means"]
    if not isinstance(means, (list, tuple)) or not all(
        isinstance(row, (list, tuple)) for row in means
    ):
        raise MalformedDocumentError("'means' must be a list of per-action rows")
    rows = tuple(tuple(float(x) for x in row) for row in means)
    name = str(doc.get("name", "custom"))
    sigma = float(doc.get("sigma", 1.0))
    env = Environment(name=name, means=rows, sigma=sigma)
    for key in ("num_actions", "num_hypotheses"):
        if key in doc and int(doc[key]) != getattr(env, key):
            raise MalformedDocumentError(
                f"declared {key}={doc[key]} but means matrix implies {getattr(env, key)}"
            )
    return env


def _validate_identifiability(env: Environment, strict: bool) -> None:
    pairs = env.indistinguishable_pairs()
    if not pairs:
        return
    if strict:
        raise IdentifiabilityError(
            f"no action distinguishes hypothesis pairs {pairs}; "
            "pass strict=False to accept anyway"
        )
    k = env.num_hypotheses
    collapsed = {h for pair in pairs for h in pair}
    for h in collapsed:
        if sum(1 for g in range(k) if g != h and env.max_divergence[h][g] == 0.0) == k - 1:
            raise IdentifiabilityError(
                f"hypothesis {h} is indistinguishable from every other hypothesis"
            )
