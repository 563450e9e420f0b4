"""Per-slot link-state sampling and rate-power functions.

Link states are i.i.d. across slots and independent across links. Every
(seed, slot) pair maps to a fixed block of a Philox stream, so a slot can be
sampled on its own or as part of a batch with identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

Link = tuple[int, int]


class RateDomainError(ValueError):
    """Power outside [0, P_max] passed to a rate function."""


# --------------------------------------------------------------------------
# rate-power functions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LogLinearRate:
    """mu = ln(1 + alpha * p * gamma). Concave in p, separable across links."""

    kind: str = "log-linear"

    def __call__(self, alpha, p, gamma=1):
        return np.log1p(np.multiply(np.multiply(alpha, p), gamma))

    def mu_max(self, alpha_max: float, power_cap: float) -> float:
        return math.log1p(alpha_max * power_cap)


@dataclass(frozen=True)
class LinearRate:
    """mu = alpha * p * gamma. Used to exercise the generic (search) solver path."""

    kind: str = "linear"

    def __call__(self, alpha, p, gamma=1):
        return np.multiply(np.multiply(alpha, p), gamma) * 1.0

    def mu_max(self, alpha_max: float, power_cap: float) -> float:
        return alpha_max * power_cap


RATE_KINDS: dict[str, Callable[[], object]] = {
    "log-linear": LogLinearRate,
    "linear": LinearRate,
}

DEFAULT_RATE = LogLinearRate()


def rate(alpha: float, p: float, gamma: int = 1, power_cap: float = math.inf,
         rate_fn=DEFAULT_RATE) -> float:
    """Scalar link rate with the power-domain check applied."""
    if p < 0 or p > power_cap:
        raise RateDomainError(f"power {p} outside [0, {power_cap}]")
    if alpha < 0:
        raise RateDomainError(f"alpha {alpha} is negative")
    return float(rate_fn(alpha, p, gamma))


@dataclass
class RatePropertyReport:
    delta: float
    property1: bool
    property2: bool
    property3: bool

    @property
    def passed(self) -> bool:
        return self.property1 and self.property2 and self.property3


def check_rate_properties(rate_fn, alphas: Sequence[float], powers: Sequence[float],
                          delta_bound: float | None = None,
                          tol: float = 1e-12) -> RatePropertyReport:
    """Check the three structural rate-power properties on a finite grid.

    Property 1 (linear upper bound): the smallest delta with
    mu(p) <= mu(0) + delta * p over the grid. A finite grid always admits
    *some* delta, so the bound must also be set by the smallest positive
    power, i.e. the secant slope (mu(p) - mu(0)) / p must not grow with p.
    A rate whose secant slope grows would need a larger delta for every
    larger power cap. ``delta_bound`` adds an explicit cap on delta.

    Properties 2 and 3 are checked by evaluating the function on a vector
    of links (one per grid point and gamma value), zeroing one link's power
    at a time, and comparing the other links' rates.
    """
    alphas = np.asarray(sorted(set(float(a) for a in alphas)))
    powers = np.asarray(sorted(set(float(p) for p in powers)))
    positive = powers[powers > 0]

    delta = 0.0
    prop1 = True
    for a in alphas:
        if positive.size == 0:
            break
        base = float(np.asarray(rate_fn(a, 0.0, 1)))
        slopes = (np.asarray(rate_fn(a, positive, 1), dtype=float) - base) / positive
        delta = max(delta, float(slopes.max()))
        if not np.all(np.isfinite(slopes)):
            prop1 = False
        elif slopes.max() > slopes[0] + tol * max(1.0, abs(slopes[0])):
            prop1 = False
    if delta_bound is not None and delta > delta_bound:
        prop1 = False

    ga, gp, gg = np.meshgrid(alphas, powers, np.array([0, 1]), indexing="ij")
    ga, gp, gg = ga.ravel(), gp.ravel(), gg.ravel()
    full = np.asarray(rate_fn(ga, gp, gg), dtype=float)
    prop2 = prop3 = True
    for k in range(ga.size):
        zeroed = gp.copy()
        zeroed[k] = 0.0
        after = np.asarray(rate_fn(ga, zeroed, gg), dtype=float)
        others = np.arange(ga.size) != k
        if np.any(full[others] > after[others] + tol):
            prop2 = False
        if gg[k] == 0 and np.any(np.abs(full - after) > tol):
            prop3 = False
    return RatePropertyReport(delta, prop1, prop2, prop3)


# --------------------------------------------------------------------------
# channel states
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelSpec:
    """Finite link-state alphabet plus a categorical distribution per link."""

    labels: tuple[str, ...]
    alphas: tuple[float, ...]
    probabilities: Mapping[Link, tuple[float, ...]] = field(default_factory=dict)

    @classmethod
    def uniform(cls, labels: Sequence[str], alphas: Sequence[float],
                probs: Sequence[float], links) -> "ChannelSpec":
        probs = tuple(float(p) for p in probs)
        return cls(tuple(labels), tuple(float(a) for a in alphas),
                   {tuple(link): probs for link in sorted(links)})

    @property
    def alpha_max(self) -> float:
        return max(self.alphas, default=0.0)


@dataclass(frozen=True)
class ChannelState:
    alpha: np.ndarray
    state_labels: np.ndarray  # state index per link, -1 where there is no link


class ChannelSampler:
    """Deterministic per-slot sampler for one (config, seed).

    Slot ``t`` consumes Philox counter block ``t``; draws are assigned to links
    in sorted link order, one uniform per link.
    """

    def __init__(self, cfg, seed: int | None = None, batch: int = 4096):
        self.n = cfg.node_count
        self.seed = cfg.seed if seed is None else seed
        self.links = sorted(cfg.links)
        spec = cfg.channel_spec
        self._rows = np.array([i for i, _ in self.links], dtype=np.intp)
        self._cols = np.array([j for _, j in self.links], dtype=np.intp)
        self._alphas = np.asarray(spec.alphas, dtype=float)
        n_states = len(spec.alphas)
        if self.links:
            cum = np.cumsum([spec.probabilities[link] for link in self.links], axis=1)
            self._thresholds = cum[:, :-1] if n_states > 1 else np.zeros((len(self.links), 0))
        else:
            self._thresholds = np.zeros((0, max(n_states - 1, 0)))
        self._stride = max(1, (len(self.links) + 3) // 4)
        self._batch = batch
        self._block_start = None
        self._block = None

    def _key(self):
        return np.uint64(self.seed % (1 << 64))

    def _uniforms(self, first_slot: int, count: int) -> np.ndarray:
        width = 4 * self._stride
        bitgen = np.random.Philox(key=int(self._key()), counter=first_slot * self._stride)
        raw = bitgen.random_raw(count * width).reshape(count, width)[:, :len(self.links)]
        return (raw >> np.uint64(11)) * (1.0 / 9007199254740992.0)

    def labels_for(self, slot: int) -> np.ndarray:
        """State index per link (sorted link order) for one slot."""
        if self._block is None or not (self._block_start <= slot < self._block_start + self._batch):
            self._block_start = slot
            u = self._uniforms(slot, self._batch)
            self._block = (u[:, :, None] >= self._thresholds[None, :, :]).sum(axis=2)
        return self._block[slot - self._block_start]

    def alpha_links(self, slot: int) -> np.ndarray:
        """alpha per link (sorted link order) for one slot."""
        return self._alphas[self.labels_for(slot)]

    def sample(self, slot: int) -> ChannelState:
        labels = self.labels_for(slot)
        alpha = np.zeros((self.n, self.n))
        state = np.full((self.n, self.n), -1, dtype=int)
        alpha[self._rows, self._cols] = self._alphas[labels]
        state[self._rows, self._cols] = labels
        return ChannelState(alpha, state)


def sample_state(cfg, seed: int, slot: int) -> ChannelState:
    """Channel state of one slot; a pure function of (cfg, seed, slot)."""
    return ChannelSampler(cfg, seed, batch=1).sample(slot)
