"""Per-slot DLSA control: admission, power + link selection, routing.

Rates are separable across links, so the joint power/link problem splits:
each direction's optimal power is found independently, and each candidate
undirected edge is worth the sum of its two directions' gains. Because the
connection matrix must be symmetric, choosing edges is then a max-weight
degree-bounded subgraph (b-matching) problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .channel import DEFAULT_RATE, LogLinearRate
from .model import LogUtility

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
DEFAULT_EXACT_LIMIT = 20


class NonConcaveError(ValueError):
    """A utility or rate objective failed the midpoint concavity test."""


class EnumerationLimitError(ValueError):
    """Exact link selection refused: too many candidate edges."""


# --------------------------------------------------------------------------
# one-dimensional concave maximization
# --------------------------------------------------------------------------

def golden_max(f, lo: float, hi: float, tol: float = 1e-9, what: str = "objective"):
    """Maximize a concave scalar function on [lo, hi].

    Every interior probe is compared with the chord through the current
    bracket ends; a probe below the chord means ``f`` is not concave.
    """
    if hi <= lo:
        return lo, f(lo)
    a, b = lo, hi
    fa, fb = f(a), f(b)
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)

    def chord_ok(x, fx):
        t = (x - a) / (b - a)
        chord = fa + t * (fb - fa)
        return fx >= chord - 1e-9 * (1.0 + abs(chord))

    while b - a > tol:
        if not (chord_ok(x1, f1) and chord_ok(x2, f2)):
            raise NonConcaveError(f"{what} failed the midpoint concavity test")
        if f1 < f2:
            a, fa = x1, f1
            x1, f1 = x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, fb = x2, f2
            x2, f2 = x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
    best = max([(fa, a), (f1, x1), (f2, x2), (fb, b)])
    # the ends of the original interval may beat the last bracket by rounding
    for x in (lo, hi):
        fx = f(x)
        if fx > best[0]:
            best = (fx, x)
    return best[1], best[0]


# --------------------------------------------------------------------------
# admission
# --------------------------------------------------------------------------

def admission_log(V, Q, r_max, weight=1.0):
    """Closed-form admission for U(r) = w ln(1+r), elementwise over arrays."""
    Q = np.asarray(Q, dtype=float)
    w = np.asarray(weight, dtype=float)
    safe = np.where(Q > 0, Q, 1.0)
    with np.errstate(over="ignore"):
        inner = np.clip(w * V / safe - 1.0, 0.0, r_max)
    return np.where(Q > 0, inner, r_max)


def solve_admission(V: float, Q: float, utility=None, r_max: float = 6.0,
                    pair=None) -> float:
    """argmax of V*U(r) - Q*r over [0, r_max]."""
    utility = LogUtility() if utility is None else utility
    if isinstance(utility, LogUtility):
        return float(admission_log(V, Q, r_max, utility.weight))
    r, _ = golden_max(lambda r: V * float(utility(r)) - Q * r, 0.0, r_max,
                      what=f"utility for pair {pair}")
    return float(r)


# --------------------------------------------------------------------------
# backpressure weights
# --------------------------------------------------------------------------

@dataclass
class WeightMatrix:
    per_commodity: np.ndarray  # N x N x C, [Q_i^c - Q_j^c]^+
    best: np.ndarray           # N x N, max over commodities
    best_commodity: np.ndarray  # N x N, commodity index (ties -> lowest index)


def compute_weights(Q) -> WeightMatrix:
    """Backpressure weights from an N x C backlog array (or a QueueState)."""
    Q = np.asarray(getattr(Q, "Q", Q), dtype=float)
    n, c = Q.shape
    per = np.maximum(Q[:, None, :] - Q[None, :, :], 0.0)
    if c == 0:
        return WeightMatrix(per, np.zeros((n, n)), np.zeros((n, n), dtype=int))
    return WeightMatrix(per, per.max(axis=2), per.argmax(axis=2))


# --------------------------------------------------------------------------
# per-link power
# --------------------------------------------------------------------------

def link_power_log(W, Z, alpha, p_max):
    """Closed form for max_p W ln(1+alpha p) - Z p on [0, p_max], elementwise."""
    W = np.asarray(W, dtype=float)
    Z = np.asarray(Z, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # Z == 0 with W > 0 gives +inf, which the clip turns into p_max
        stationary = W / Z - 1.0 / alpha
        p = np.where((W > 0) & (alpha > 0), np.clip(stationary, 0.0, p_max), 0.0)
    gain = W * np.log1p(alpha * p) - Z * p
    return p, np.maximum(gain, 0.0)


def optimal_link_power(W: float, Z: float, alpha: float, p_max: float,
                       rate_fn=DEFAULT_RATE) -> tuple[float, float]:
    """Power maximizing W*mu(alpha, p) - Z*p on [0, p_max], and that maximum."""
    if isinstance(rate_fn, LogLinearRate):
        p, g = link_power_log(W, Z, alpha, p_max)
        return float(p), float(g)
    if W <= 0 or alpha <= 0:
        return 0.0, 0.0
    p, g = golden_max(lambda p: W * float(rate_fn(alpha, p, 1)) - Z * p, 0.0, p_max,
                      what="rate objective")
    if g <= 0:
        return 0.0, 0.0
    return float(p), float(g)


def direction_gains(links, weights: WeightMatrix, Z, alpha, p_max, rate_fn=DEFAULT_RATE):
    """Optimal power and gain for each directed link in ``links``."""
    rows = np.array([i for i, _ in links], dtype=np.intp)
    cols = np.array([j for _, j in links], dtype=np.intp)
    W = weights.best[rows, cols]
    Zl = np.asarray(Z, dtype=float)[rows]
    al = np.asarray(alpha, dtype=float)[rows, cols]
    if isinstance(rate_fn, LogLinearRate):
        return link_power_log(W, Zl, al, p_max)
    out = [optimal_link_power(w, z, a, p_max, rate_fn) for w, z, a in zip(W, Zl, al)]
    p = np.array([x[0] for x in out])
    g = np.array([x[1] for x in out])
    return p, g


# --------------------------------------------------------------------------
# degree-bounded edge selection
# --------------------------------------------------------------------------

class ExactSelector:
    """Max-weight degree-bounded edge subset by enumerating all 2^E subsets.

    The degree-feasibility table is built once per (edges, budget). Among
    optimal subsets the smallest bitmask wins, so zero-weight edges are never
    selected and ties go to lexicographically earlier edges.
    """

    def __init__(self, edges: Sequence[tuple[int, int]], budget,
                 max_edges: int = DEFAULT_EXACT_LIMIT):
        self.edges = tuple(tuple(e) for e in edges)
        m = len(self.edges)
        if m > max_edges:
            raise EnumerationLimitError(f"{m} candidate edges exceeds exact limit {max_edges}")
        n = 1 + max((max(e) for e in self.edges), default=-1)
        if np.ndim(budget) == 0:
            budget = [int(budget)] * n
        masks = np.arange(1 << m, dtype=np.int64)
        ok = np.ones(1 << m, dtype=bool)
        for node in range(n):
            incident = [e for e, (i, j) in enumerate(self.edges) if node in (i, j)]
            if len(incident) <= budget[node]:
                continue
            deg = np.zeros(1 << m, dtype=np.int16)
            for e in incident:
                deg += ((masks >> e) & 1).astype(np.int16)
            ok &= deg <= budget[node]
        self.infeasible = ~ok
        self.bits = np.arange(m)

    def __call__(self, edge_weights) -> np.ndarray:
        w = np.asarray(edge_weights, dtype=float)
        totals = np.zeros(1 << len(w))
        for e, val in enumerate(np.maximum(w, 0.0)):
            totals[1 << e: 2 << e] = totals[: 1 << e] + val
        totals[self.infeasible] = -np.inf
        best = int(totals.argmax())
        return ((best >> self.bits) & 1).astype(bool) & (w > 0)


@lru_cache(maxsize=64)
def _selector(edges, budget, max_edges):
    return ExactSelector(edges, budget, max_edges)


def best_edge_subset(edges: Sequence[tuple[int, int]], edge_weights, budget,
                     max_edges: int = DEFAULT_EXACT_LIMIT) -> np.ndarray:
    """Exact max-weight degree-bounded edge subset; ``budget`` is an int or per-node."""
    edges = tuple(tuple(e) for e in edges)
    if len(edges) > max_edges:
        raise EnumerationLimitError(f"{len(edges)} candidate edges exceeds exact limit {max_edges}")
    key = int(budget) if np.ndim(budget) == 0 else tuple(int(b) for b in budget)
    return _selector(edges, key, max_edges)(edge_weights)


def greedy_edge_subset(edges: Sequence[tuple[int, int]], edge_weights, budget) -> np.ndarray:
    edges = [tuple(e) for e in edges]
    w = np.asarray(edge_weights, dtype=float)
    n = 1 + max((max(e) for e in edges), default=-1)
    residual = [int(budget)] * n if np.ndim(budget) == 0 else [int(b) for b in budget]
    chosen = np.zeros(len(edges), dtype=bool)
    for k in sorted((k for k in range(len(edges)) if w[k] > 0), key=lambda k: (-w[k], edges[k])):
        i, j = edges[k]
        if residual[i] > 0 and residual[j] > 0:
            chosen[k] = True
            residual[i] -= 1
            residual[j] -= 1
    return chosen


@dataclass
class LinkSelection:
    gamma: np.ndarray
    power: np.ndarray
    objective: float
    edge_weights: np.ndarray
    chosen: np.ndarray


def _selection(graph, weights, Z, state, cfg, pick) -> LinkSelection:
    n = graph.node_count
    edges = graph.undirected_edges
    alpha = getattr(state, "alpha", state)
    fwd = list(edges)
    rev = [(j, i) for i, j in edges]
    p_f, g_f = direction_gains(fwd, weights, Z, alpha, cfg.power_cap, cfg.rate_spec)
    p_r, g_r = direction_gains(rev, weights, Z, alpha, cfg.power_cap, cfg.rate_spec)
    ew = g_f + g_r if edges else np.zeros(0)
    chosen = pick(edges, ew) if edges else np.zeros(0, dtype=bool)
    gamma = np.zeros((n, n), dtype=np.int8)
    power = np.zeros((n, n))
    for k in np.flatnonzero(chosen):
        i, j = edges[k]
        gamma[i, j] = gamma[j, i] = 1
        power[i, j] = p_f[k]
        power[j, i] = p_r[k]
    return LinkSelection(gamma, power, float(ew[chosen].sum()), ew, chosen)


def select_links_exact(graph, weights: WeightMatrix, Z, state, cfg,
                       max_edges: int = DEFAULT_EXACT_LIMIT) -> LinkSelection:
    """Optimal symmetric connection + power matrices by subset enumeration."""
    if len(graph.undirected_edges) > max_edges:
        raise EnumerationLimitError(
            f"{len(graph.undirected_edges)} candidate edges exceeds exact limit {max_edges}; "
            "use select_links_greedy")
    return _selection(graph, weights, Z, state, cfg,
                      lambda e, w: best_edge_subset(e, w, cfg.degree_budget, max_edges))


def select_links_greedy(graph, weights: WeightMatrix, Z, state, cfg) -> LinkSelection:
    """Heaviest-edge-first selection subject to residual degree budgets."""
    return _selection(graph, weights, Z, state, cfg,
                      lambda e, w: greedy_edge_subset(e, w, cfg.degree_budget))


# --------------------------------------------------------------------------
# routing
# --------------------------------------------------------------------------

def route_commodities(gamma, power, weights: WeightMatrix, state, rate_fn=DEFAULT_RATE):
    """Give each connected link's full rate to its heaviest commodity (N x N x C)."""
    alpha = getattr(state, "alpha", state)
    gamma = np.asarray(gamma)
    mu = np.asarray(rate_fn(alpha, power, gamma), dtype=float)
    served = np.where((gamma > 0) & (weights.best > 0), mu, 0.0)
    c = weights.per_commodity.shape[2]
    onehot = np.arange(c)[None, None, :] == weights.best_commodity[:, :, None]
    return onehot * served[:, :, None]
