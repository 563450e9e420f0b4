"""Drift-bound constant, utility-gap bound and sweep diagnostics."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .channel import check_rate_properties

MONOTONE_TOL = 0.02


def compute_B(cfg) -> float:
    """N^2 (1.5 d_in^2 mu_max^2 + R_max^2) + N (P_max + P_tot)^2 / 2."""
    n = cfg.node_count
    mu = cfg.mu_max
    return (n * n * (1.5 * cfg.in_degree_limit ** 2 * mu * mu + cfg.admission_cap ** 2)
            + n * 0.5 * (cfg.power_cap + cfg.avg_power_budget) ** 2)


def gap_bound(cfg, V: float) -> float:
    return compute_B(cfg) / V


@dataclass
class SweepPoint:
    V: float
    seeds: int
    avg_utility: float
    avg_backlog: float
    stability_stat: float
    max_avg_power: float
    gap_bound: float
    within_gap: bool = True


@dataclass
class TheoryReport:
    B: float
    gap_bound: float
    mu_max: float
    delta_witness: float
    per_V_summary: list[SweepPoint]
    flags: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"B (drift constant)      {self.B:.6g}",
            f"gap bound B/V (cfg V)   {self.gap_bound:.6g}",
            f"mu_max                  {self.mu_max:.6g}",
            f"delta witness           {self.delta_witness:.6g}",
            f"optimum proxy           largest-V run (V={self.per_V_summary[-1].V:g})",
            "",
            f"{'V':>8} {'seeds':>5} {'avg_utility':>12} {'avg_backlog':>12} "
            f"{'stability':>10} {'max_power':>9} {'B/V':>10} {'gap_ok':>6}",
        ]
        for p in self.per_V_summary:
            lines.append(f"{p.V:>8g} {p.seeds:>5d} {p.avg_utility:>12.6f} {p.avg_backlog:>12.4f} "
                         f"{p.stability_stat:>10.6f} {p.max_avg_power:>9.5f} "
                         f"{p.gap_bound:>10.4f} {'yes' if p.within_gap else 'no':>6}")
        lines.append("")
        lines.extend(f"FLAG: {f}" for f in self.flags)
        if not self.flags:
            lines.append("no flags")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["V", "seeds", "avg_utility", "avg_backlog", "stability_stat",
                    "max_avg_power", "gap_bound", "within_gap"])
        for p in self.per_V_summary:
            w.writerow([f"{p.V:g}", p.seeds, repr(p.avg_utility), repr(p.avg_backlog),
                        repr(p.stability_stat), repr(p.max_avg_power), repr(p.gap_bound),
                        int(p.within_gap)])
        return buf.getvalue()


def diagnose_sweep(results, cfg, tolerance: float = MONOTONE_TOL) -> TheoryReport:
    """Tabulate seed means per V and flag departures from the expected trends.

    ``results`` is any iterable of objects with ``V``, ``avg_utility``,
    ``avg_backlog``, ``stability_stat`` and ``max_avg_power``; RunMetrics and
    rows read back from a sweep CSV both qualify. The largest-V point stands in
    for the optimal utility in the B/V gap check.
    """
    groups = defaultdict(list)
    for r in results:
        groups[float(r.V)].append(r)
    if len(groups) < 2:
        raise ValueError("need >= 2 points (distinct V values) to diagnose a sweep")
    B = compute_B(cfg)
    points = []
    for V in sorted(groups):
        rs = groups[V]
        points.append(SweepPoint(
            V=V, seeds=len(rs),
            avg_utility=float(np.mean([r.avg_utility for r in rs])),
            avg_backlog=float(np.mean([r.avg_backlog for r in rs])),
            stability_stat=float(np.mean([r.stability_stat for r in rs])),
            max_avg_power=float(max(r.max_avg_power for r in rs)),
            gap_bound=B / V,
        ))
    flags = []
    for prev, cur in zip(points, points[1:]):
        if cur.avg_utility < prev.avg_utility - tolerance * abs(prev.avg_utility):
            flags.append(f"utility decreases from V={prev.V:g} ({prev.avg_utility:.6g}) "
                         f"to V={cur.V:g} ({cur.avg_utility:.6g})")
        if cur.avg_backlog <= prev.avg_backlog:
            flags.append(f"backlog does not grow from V={prev.V:g} to V={cur.V:g}")
    proxy = points[-1].avg_utility
    for p in points:
        p.within_gap = p.avg_utility >= proxy - p.gap_bound
        if not p.within_gap:
            flags.append(f"utility at V={p.V:g} is more than B/V below the optimum proxy")
    grid_alpha = sorted(set(cfg.channel_spec.alphas))
    grid_p = np.linspace(0.0, cfg.power_cap, 13)
    delta = check_rate_properties(cfg.rate_spec, grid_alpha, grid_p).delta
    return TheoryReport(B=B, gap_bound=B / cfg.control_V, mu_max=cfg.mu_max,
                        delta_witness=delta, per_V_summary=points, flags=flags)
