"""Slot loop: sample channel, run DLSA, move packets, update queues, collect metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSampler, ChannelState, LogLinearRate
from .dlsa import (DEFAULT_EXACT_LIMIT, ExactSelector, WeightMatrix, admission_log,
                   compute_weights, greedy_edge_subset, link_power_log, optimal_link_power,
                   route_commodities, solve_admission)
from .model import Graph, LogUtility, NetworkConfig, build_graph

log = logging.getLogger(__name__)

NEG_TOL = 1e-9


class SimulationFault(RuntimeError):
    """Internal-consistency failure; ``dump`` holds the offending slot's data."""

    def __init__(self, message: str, dump: dict | None = None):
        super().__init__(message)
        self.dump = dump or {}


@dataclass
class QueueState:
    Q: np.ndarray  # N x C backlog, column k belongs to commodity cfg.commodities[k]
    Z: np.ndarray  # N virtual power queues

    @classmethod
    def zeros(cls, cfg: NetworkConfig) -> "QueueState":
        return cls(np.zeros((cfg.node_count, len(cfg.commodities))), np.zeros(cfg.node_count))


@dataclass
class SlotDecision:
    admissions: np.ndarray       # N x C
    gamma: np.ndarray            # N x N, symmetric 0/1
    power: np.ndarray            # N x N
    commodity_rates: np.ndarray  # N x N x C
    objective_value: float       # link objective plus admission objective
    link_objective: float = 0.0


@dataclass
class RunMetrics:
    V: float
    seed: int
    horizon: int
    avg_admitted: np.ndarray
    avg_utility: float
    avg_backlog: float
    avg_power: np.ndarray
    delivered: np.ndarray        # N x C, cumulative arrivals at destinations by last hop
    stability_stat: float
    final_state: QueueState
    mean_slot_utility: float = 0.0
    approximate: bool = False
    config_hash: str = ""
    trace: list | None = None

    @property
    def power_excess(self) -> np.ndarray:
        """Z_n(T)/T, the slack allowed above the power budget at a finite horizon."""
        if self.horizon == 0:
            return np.zeros_like(self.avg_power)
        return self.final_state.Z / self.horizon

    @property
    def max_avg_power(self) -> float:
        return float(self.avg_power.max()) if self.avg_power.size else 0.0


def update_virtual(Z, power, gamma, power_budget: float) -> np.ndarray:
    """Z(t+1) = [Z(t) - P_tot]^+ + sum_b p_nb gamma_nb."""
    spent = (np.asarray(power) * np.asarray(gamma)).sum(axis=1)
    return np.maximum(np.asarray(Z, dtype=float) - power_budget, 0.0) + spent


def transfers(Q, commodity_rates) -> np.ndarray:
    """Actual per-link transfers; a short queue is split pro rata over its allocations."""
    Q = np.asarray(Q, dtype=float)
    alloc = commodity_rates.sum(axis=1)  # N x C
    scale = np.ones_like(Q)
    short = alloc > Q
    scale[short] = Q[short] / alloc[short]
    return commodity_rates * scale[:, None, :]


def update_queues(state: QueueState, decision: SlotDecision, destinations) -> tuple[QueueState, np.ndarray]:
    """Exact-transfer backlog update. Returns the new state and per-link arrivals
    absorbed at destinations (N x C, by last hop)."""
    Q = state.Q
    x = transfers(Q, decision.commodity_rates)
    out = x.sum(axis=1)
    inc = x.sum(axis=0)
    new_q = Q - out + inc + decision.admissions
    dest = np.asarray(destinations, dtype=np.intp)
    cols = np.arange(len(dest))
    absorbed = np.zeros_like(Q)
    absorbed[:, cols] = x[:, dest, cols]
    new_q[dest, cols] = 0.0
    if new_q.min() < -NEG_TOL:
        raise SimulationFault("negative backlog after update",
                              {"Q": Q.tolist(), "Q_next": new_q.tolist()})
    np.maximum(new_q, 0.0, out=new_q)
    return QueueState(new_q, state.Z), absorbed


class Simulator:
    """One configured network; ``step`` advances one slot, ``run`` the horizon."""

    def __init__(self, cfg: NetworkConfig, graph: Graph | None = None,
                 exact_limit: int = DEFAULT_EXACT_LIMIT, check_invariants: bool = False):
        self.cfg = cfg
        self.graph = build_graph(cfg) if graph is None else graph
        self.sampler = ChannelSampler(cfg)
        self.check = check_invariants
        n, c = cfg.node_count, len(cfg.commodities)
        self.n, self.c = n, c
        self.dest = np.array(cfg.commodities, dtype=np.intp)
        self.cols = np.arange(c)
        idx = {k: i for i, k in enumerate(cfg.commodities)}

        self.admit = np.zeros((n, c), dtype=bool)
        for node, com in cfg.admitting_pairs:
            self.admit[node, idx[com]] = True
        utils = {(node, com): cfg.utility_for(node, com) for node, com in cfg.admitting_pairs}
        self.log_weights = None
        if all(isinstance(u, LogUtility) for u in utils.values()):
            self.log_weights = np.ones((n, c))
            for (node, com), u in utils.items():
                self.log_weights[node, idx[com]] = u.weight
        self.utils = {(node, idx[com]): u for (node, com), u in utils.items()}

        self.edges = self.graph.undirected_edges
        self.approximate = len(self.edges) > exact_limit
        self.exact_limit = exact_limit
        self.budget = cfg.degree_budget
        self.exact = None if self.approximate else ExactSelector(self.edges, self.budget, exact_limit)
        e_rows = np.array([i for i, _ in self.edges], dtype=np.intp)
        e_cols = np.array([j for _, j in self.edges], dtype=np.intp)
        # direction d < E is i->j of edge d, d >= E is the reverse
        self.d_rows = np.concatenate([e_rows, e_cols])
        self.d_cols = np.concatenate([e_cols, e_rows])
        self.link_rows = self.sampler._rows
        self.link_cols = self.sampler._cols
        self.log_rate = isinstance(cfg.rate_spec, LogLinearRate)
        if self.approximate:
            log.info("%d candidate edges > exact limit %d: greedy selection",
                     len(self.edges), exact_limit)

    # -- pieces ---------------------------------------------------------------

    def channel(self, slot: int) -> ChannelState:
        return self.sampler.sample(slot)

    def admissions(self, Q: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        if self.log_weights is not None:
            R = admission_log(cfg.control_V, Q, cfg.admission_cap, self.log_weights)
            return np.where(self.admit, R, 0.0)
        R = np.zeros_like(Q)
        for (node, k), u in self.utils.items():
            R[node, k] = solve_admission(cfg.control_V, Q[node, k], u, cfg.admission_cap,
                                         pair=(node, cfg.commodities[k]))
        return R

    def admission_objective(self, Q, R) -> float:
        V = self.cfg.control_V
        if self.log_weights is not None:
            return float(((V * self.log_weights * np.log1p(R) - Q * R) * self.admit).sum())
        return float(sum(V * u(R[node, k]) - Q[node, k] * R[node, k]
                         for (node, k), u in self.utils.items()))

    def slot_utility(self, R) -> float:
        if self.log_weights is not None:
            return float((self.log_weights * np.log1p(R) * self.admit).sum())
        return float(sum(u(R[node, k]) for (node, k), u in self.utils.items()))

    def select(self, weights: WeightMatrix, Z, alpha):
        cfg = self.cfg
        W = weights.best[self.d_rows, self.d_cols]
        Zd = Z[self.d_rows]
        ad = alpha[self.d_rows, self.d_cols]
        if self.log_rate:
            p, g = link_power_log(W, Zd, ad, cfg.power_cap)
        else:
            pg = [optimal_link_power(w, z, a, cfg.power_cap, cfg.rate_spec)
                  for w, z, a in zip(W, Zd, ad)]
            p = np.array([x[0] for x in pg])
            g = np.array([x[1] for x in pg])
        m = len(self.edges)
        ew = g[:m] + g[m:]
        if m == 0:
            chosen = np.zeros(0, dtype=bool)
        elif self.approximate:
            chosen = greedy_edge_subset(self.edges, ew, self.budget)
        else:
            chosen = self.exact(ew)
        both = np.concatenate([chosen, chosen])
        gamma = np.zeros((self.n, self.n), dtype=np.int8)
        power = np.zeros((self.n, self.n))
        gamma[self.d_rows[both], self.d_cols[both]] = 1
        power[self.d_rows[both], self.d_cols[both]] = p[both]
        return gamma, power, float(ew[chosen].sum())

    # -- slot ---------------------------------------------------------------

    def step(self, state: QueueState, slot: int):
        cfg = self.cfg
        Q, Z = state.Q, state.Z
        st = self.channel(slot)
        R = self.admissions(Q)
        weights = compute_weights(Q)
        gamma, power, link_obj = self.select(weights, Z, st.alpha)
        rates = route_commodities(gamma, power, weights, st, cfg.rate_spec)
        decision = SlotDecision(R, gamma, power, rates,
                                link_obj + self.admission_objective(Q, R), link_obj)
        moved, absorbed = update_queues(state, decision, self.dest)
        new_z = update_virtual(Z, power, gamma, cfg.avg_power_budget)
        new_state = QueueState(moved.Q, new_z)
        if self.check:
            self.check_slot(state, new_state, decision, st)
        record = {
            "slot": slot,
            "total_backlog": float(new_state.Q.sum()),
            "Z": new_z.copy(),
            "objective": decision.objective_value,
            "admitted_sum": float(R.sum()),
            "slot_utility": self.slot_utility(R),
            "absorbed": absorbed,
        }
        return new_state, decision, record

    def check_slot(self, old: QueueState, new: QueueState, d: SlotDecision, st: ChannelState):
        cfg, n = self.cfg, self.n
        g = d.gamma
        problems = []
        if not np.array_equal(g, g.T):
            problems.append("gamma not symmetric")
        if np.any(np.diag(g)):
            problems.append("gamma has a self-connection")
        allowed = np.zeros((n, n), dtype=bool)
        allowed[self.link_rows, self.link_cols] = True
        if np.any(g[~allowed]):
            problems.append("gamma connects a pair outside the link set")
        if np.any(g.sum(axis=1) > cfg.out_degree_limit) or np.any(g.sum(axis=0) > cfg.in_degree_limit):
            problems.append("degree limit exceeded")
        if np.any(d.power < 0) or np.any(d.power > cfg.power_cap) or np.any(d.power[g == 0] != 0):
            problems.append("power outside [0, P_max] or on a disconnected link")
        mu = np.asarray(cfg.rate_spec(st.alpha, d.power, g), dtype=float)
        if np.any(d.commodity_rates.sum(axis=2) > mu + 1e-12):
            problems.append("commodity rates exceed link rate")
        R = d.admissions
        if np.any(R < 0) or np.any(R > cfg.admission_cap) or np.any(R[~self.admit] != 0):
            problems.append("admission outside [0, R_max] or on a non-admitting pair")
        bound = (np.maximum(old.Q - d.commodity_rates.sum(axis=1), 0.0)
                 + d.commodity_rates.sum(axis=0) + R)
        if np.any(new.Q > bound + 1e-9):
            problems.append("backlog update exceeds the queueing inequality")
        if np.any(new.Q < 0) or np.any(new.Z < 0):
            problems.append("negative queue")
        if np.any(new.Q[self.dest, self.cols] != 0):
            problems.append("destination backlog nonzero")
        if problems:
            raise SimulationFault("; ".join(problems), {
                "Q": old.Q.tolist(), "Z": old.Z.tolist(), "alpha": st.alpha.tolist(),
                "gamma": g.tolist(), "power": d.power.tolist(), "admissions": R.tolist()})

    # -- horizon ------------------------------------------------------------

    def run(self, horizon: int | None = None, trace: bool = False, trace_sink=None,
            on_slot=None) -> RunMetrics:
        cfg = self.cfg
        T = cfg.horizon if horizon is None else horizon
        n, c = self.n, self.c
        state = QueueState.zeros(cfg)
        sum_r = np.zeros((n, c))
        sum_power = np.zeros(n)
        sum_backlog = 0.0
        sum_slot_u = 0.0
        delivered = np.zeros((n, c))
        records = [] if trace else None
        for t in range(T):
            state, decision, rec = self.step(state, t)
            sum_r += decision.admissions
            sum_power += decision.power.sum(axis=1)
            sum_backlog += rec["total_backlog"]
            sum_slot_u += rec["slot_utility"]
            delivered += rec.pop("absorbed")
            if self.check:
                admitted = sum_r.sum(axis=0)
                held = delivered.sum(axis=0) + state.Q.sum(axis=0)
                if np.any(np.abs(admitted - held) > 1e-6 * max(1.0, admitted.max())):
                    raise SimulationFault("conservation violated",
                                          {"slot": t, "admitted": admitted.tolist(),
                                           "accounted": held.tolist()})
            if records is not None:
                records.append(rec)
            if trace_sink is not None:
                trace_sink(rec)
            if on_slot is not None:
                on_slot(t, state, decision)
        if T == 0:
            avg_r = np.zeros((n, c))
            avg_u = avg_b = stab = mean_u = 0.0
            avg_p = np.zeros(n)
        else:
            avg_r = sum_r / T
            avg_u = self.slot_utility(avg_r)
            avg_b = sum_backlog / T
            avg_p = sum_power / T
            stab = float(state.Q.max() / T) if state.Q.size else 0.0
            mean_u = sum_slot_u / T
        return RunMetrics(
            V=cfg.control_V, seed=cfg.seed, horizon=T, avg_admitted=avg_r, avg_utility=avg_u,
            avg_backlog=avg_b, avg_power=avg_p, delivered=delivered, stability_stat=stab,
            final_state=state, mean_slot_utility=mean_u, approximate=self.approximate,
            config_hash=cfg.config_hash(), trace=records)


def step(state: QueueState, cfg: NetworkConfig, graph: Graph, slot: int, sim: Simulator | None = None):
    """Advance one slot; returns (next state, decision, slot record)."""
    sim = sim if sim is not None else Simulator(cfg, graph)
    return sim.step(state, slot)


def run(cfg: NetworkConfig, exact_limit: int = DEFAULT_EXACT_LIMIT,
        check_invariants: bool = False, trace: bool = False, trace_sink=None) -> RunMetrics:
    return Simulator(cfg, exact_limit=exact_limit,
                     check_invariants=check_invariants).run(trace=trace, trace_sink=trace_sink)
