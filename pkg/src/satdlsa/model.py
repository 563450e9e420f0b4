"""Network configuration, utility descriptors and the static link graph."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .channel import DEFAULT_RATE, ChannelSpec

Link = tuple[int, int]
Pair = tuple[int, int]

PROBABILITY_TOL = 1e-9


class ConfigError(ValueError):
    """Raised when a configuration fails validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


# --------------------------------------------------------------------------
# utilities
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LogUtility:
    """U(r) = weight * ln(1 + r)."""

    weight: float = 1.0
    name = "log1p"

    def __call__(self, r):
        return self.weight * np.log1p(r)

    def describe(self) -> str:
        return "log1p" if self.weight == 1.0 else f"log1p {self.weight!r}"


@dataclass(frozen=True)
class PowerUtility:
    """U(r) = weight * r**exponent, concave for 0 < exponent <= 1."""

    exponent: float = 0.5
    weight: float = 1.0
    name = "pow"

    def __call__(self, r):
        return self.weight * np.power(np.maximum(r, 0.0), self.exponent)

    def describe(self) -> str:
        return f"pow {self.exponent!r} {self.weight!r}"


@dataclass(frozen=True)
class CallableUtility:
    """Wrap an arbitrary callable; solved numerically, concavity spot-checked."""

    fn: Callable[[float], float]
    name: str = "custom"

    def __call__(self, r):
        return self.fn(r)

    def describe(self) -> str:
        return self.name


DEFAULT_UTILITY = LogUtility()


def parse_utility(text: str):
    parts = text.split()
    if not parts:
        raise ValueError("empty utility descriptor")
    kind, args = parts[0], [float(x) for x in parts[1:]]
    if kind == "log1p" and len(args) <= 1:
        return LogUtility(*args)
    if kind == "pow" and 1 <= len(args) <= 2:
        return PowerUtility(*args)
    raise ValueError(f"unknown utility descriptor {text!r}")


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkConfig:
    node_count: int
    links: frozenset[Link]
    out_degree_limit: int
    in_degree_limit: int
    admission_cap: float
    power_cap: float
    avg_power_budget: float
    channel_spec: ChannelSpec
    commodities: tuple[int, ...] | None = None
    admitting_pairs: frozenset[Pair] | None = None
    utility: object = DEFAULT_UTILITY
    utility_overrides: Mapping[Pair, object] = field(default_factory=dict)
    rate_spec: object = DEFAULT_RATE
    control_V: float = 100.0
    horizon: int = 100_000
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "links", frozenset(tuple(l) for l in self.links))
        if self.commodities is None:
            object.__setattr__(self, "commodities", tuple(range(self.node_count)))
        else:
            object.__setattr__(self, "commodities", tuple(sorted(self.commodities)))
        if self.admitting_pairs is None:
            pairs = {(n, c) for n in range(self.node_count) for c in self.commodities if n != c}
            object.__setattr__(self, "admitting_pairs", frozenset(pairs))
        else:
            object.__setattr__(self, "admitting_pairs",
                               frozenset(tuple(p) for p in self.admitting_pairs))

    def utility_for(self, n: int, c: int):
        return self.utility_overrides.get((n, c), self.utility)

    @property
    def degree_budget(self) -> int:
        # a selected symmetric edge uses one out- and one in-slot at each end
        return min(self.out_degree_limit, self.in_degree_limit)

    @property
    def mu_max(self) -> float:
        return self.rate_spec.mu_max(self.channel_spec.alpha_max, self.power_cap)

    def replace(self, **changes) -> "NetworkConfig":
        return replace(self, **changes)

    def canonical(self, include_control: bool = True) -> dict:
        doc = {
            "node_count": self.node_count,
            "links": sorted(self.links),
            "out_degree_limit": self.out_degree_limit,
            "in_degree_limit": self.in_degree_limit,
            "admission_cap": self.admission_cap,
            "power_cap": self.power_cap,
            "avg_power_budget": self.avg_power_budget,
            "commodities": list(self.commodities),
            "admitting_pairs": sorted(self.admitting_pairs),
            "utility": self.utility.describe(),
            "utility_overrides": sorted((list(k), v.describe())
                                        for k, v in self.utility_overrides.items()),
            "rate": self.rate_spec.kind,
            "states": [list(self.channel_spec.labels), list(self.channel_spec.alphas)],
            "channel": sorted((list(k), list(v))
                              for k, v in self.channel_spec.probabilities.items()),
            "horizon": self.horizon,
        }
        if include_control:
            doc["control_V"] = self.control_V
            doc["seed"] = self.seed
        return doc

    def config_hash(self) -> str:
        """Short digest of everything except V and seed (sweep key)."""
        blob = json.dumps(self.canonical(include_control=False), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _is_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def validate_config(cfg: NetworkConfig) -> list[str]:
    """Return every violated invariant as ``"field: rule"``; empty when valid."""
    out: list[str] = []
    n = cfg.node_count
    if not _is_int(n) or n <= 0:
        out.append(f"node_count: must be a positive integer, got {n!r}")
        return out
    for (i, j) in sorted(cfg.links):
        if i == j:
            out.append(f"links: self-loop ({i}, {j})")
        if not (0 <= i < n and 0 <= j < n):
            out.append(f"links: node id out of range in ({i}, {j})")
    for name in ("out_degree_limit", "in_degree_limit"):
        v = getattr(cfg, name)
        if not _is_int(v) or v <= 0:
            out.append(f"{name}: must be a positive integer, got {v!r}")
    for name in ("admission_cap", "power_cap", "avg_power_budget"):
        v = getattr(cfg, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
            out.append(f"{name}: must be a finite nonnegative number, got {v!r}")
    if len(set(cfg.commodities)) != len(cfg.commodities):
        out.append("commodities: duplicate commodity id")
    for c in cfg.commodities:
        if not 0 <= c < n:
            out.append(f"commodities: destination {c} is not a node id")
    for (node, c) in sorted(cfg.admitting_pairs):
        if c not in cfg.commodities:
            out.append(f"admitting_pairs: ({node}, {c}) names an unknown commodity")
        if not 0 <= node < n:
            out.append(f"admitting_pairs: ({node}, {c}) names an unknown node")
        if node == c:
            out.append(f"admitting_pairs: ({node}, {c}) admits at its own destination")
    for pair in sorted(cfg.utility_overrides):
        if pair not in cfg.admitting_pairs:
            out.append(f"utility_spec: override for non-admitting pair {pair}")
    for u in [cfg.utility, *cfg.utility_overrides.values()]:
        w = getattr(u, "weight", 1.0)
        if not w > 0:
            out.append(f"utility_spec: weight must be positive, got {w!r}")
        e = getattr(u, "exponent", None)
        if e is not None and not 0 < e <= 1:
            out.append(f"utility_spec: exponent must lie in (0, 1], got {e!r}")
    if not (isinstance(cfg.control_V, (int, float)) and cfg.control_V >= 1):
        out.append(f"control_V: must be >= 1, got {cfg.control_V!r}")
    if not _is_int(cfg.horizon) or cfg.horizon < 0:
        out.append(f"horizon: must be a nonnegative integer, got {cfg.horizon!r}")
    if not _is_int(cfg.seed):
        out.append(f"seed: must be an integer, got {cfg.seed!r}")

    spec = cfg.channel_spec
    if len(spec.labels) != len(spec.alphas) or not spec.labels:
        out.append("channel_spec: labels and alphas must be nonempty and equal length")
    if any(a < 0 for a in spec.alphas):
        out.append("channel_spec: negative link-state factor")
    for link in sorted(cfg.links):
        probs = spec.probabilities.get(link)
        if probs is None:
            out.append(f"channel_spec: no distribution for link {link}")
            continue
        if len(probs) != len(spec.alphas):
            out.append(f"channel_spec: link {link} has {len(probs)} probabilities "
                       f"for {len(spec.alphas)} states")
        if any(p < 0 for p in probs):
            out.append(f"channel_spec: negative probability on link {link}")
        total = sum(probs)
        if abs(total - 1.0) > PROBABILITY_TOL:
            out.append(f"channel_spec: probabilities sum {total:g} on link {link}")
    for link in sorted(set(spec.probabilities) - cfg.links):
        out.append(f"channel_spec: distribution for unknown link {link}")
    return out


# --------------------------------------------------------------------------
# graph
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Graph:
    node_count: int
    out_neighbors: tuple[tuple[int, ...], ...]
    in_neighbors: tuple[tuple[int, ...], ...]
    undirected_edges: tuple[tuple[int, int], ...]

    @property
    def max_out_degree(self) -> int:
        return max((len(x) for x in self.out_neighbors), default=0)

    @property
    def max_in_degree(self) -> int:
        return max((len(x) for x in self.in_neighbors), default=0)

    def to_json(self) -> str:
        return json.dumps({
            "node_count": self.node_count,
            "out_neighbors": self.out_neighbors,
            "in_neighbors": self.in_neighbors,
            "undirected_edges": self.undirected_edges,
        }, sort_keys=True)


def build_graph(cfg: NetworkConfig) -> Graph:
    violations = validate_config(cfg)
    if violations:
        raise ConfigError(violations)
    n = cfg.node_count
    outs = tuple(tuple(sorted(j for (i, j) in cfg.links if i == a)) for a in range(n))
    ins = tuple(tuple(sorted(i for (i, j) in cfg.links if j == a)) for a in range(n))
    edges = tuple(sorted((i, j) for (i, j) in cfg.links if i < j and (j, i) in cfg.links))
    return Graph(n, outs, ins, edges)


def full_mesh(n: int) -> frozenset[Link]:
    return frozenset((i, j) for i in range(n) for j in range(n) if i != j)


PAPER_STATES = ("G", "B", "C", "U")
PAPER_ALPHAS = (3.0, 1.0, 2.0, 0.0)


def paper_config(V: float = 100.0, horizon: int = 100_000, seed: int = 1) -> NetworkConfig:
    """The 4-node mesh experiment: equiprobable G/B/C/U, R_max 6, P_max 6, P_tot 4."""
    links = full_mesh(4)
    return NetworkConfig(
        node_count=4,
        links=links,
        out_degree_limit=2,
        in_degree_limit=2,
        admission_cap=6.0,
        power_cap=6.0,
        avg_power_budget=4.0,
        channel_spec=ChannelSpec.uniform(PAPER_STATES, PAPER_ALPHAS, [0.25] * 4, links),
        control_V=float(V),
        horizon=horizon,
        seed=seed,
    )
