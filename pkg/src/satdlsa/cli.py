"""Command line entry point: run | sweep | trace | check-config | report."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import compute_B, diagnose_sweep
from .channel import check_rate_properties
from .configfile import load_config
from .dlsa import DEFAULT_EXACT_LIMIT
from .engine import Simulator, SimulationFault
from .model import ConfigError, NetworkConfig, build_graph, validate_config

log = logging.getLogger("satdlsa")

EXIT_OK, EXIT_CONFIG, EXIT_FAULT = 0, 1, 2
OUTPUT_ENV = "SATDLSA_OUTPUT_DIR"
PAPER_V_VALUES = (1.0, 10.0, 100.0, 200.0, 1000.0, 5000.0)

SUMMARY_COLUMNS = ["config_hash", "V", "seed", "horizon", "avg_utility", "avg_backlog",
                   "stability_stat", "max_avg_power", "max_power_excess",
                   "mean_slot_utility", "approximate"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _num(x: float) -> str:
    return repr(float(x))


def summary_row(m) -> list[str]:
    excess = m.power_excess
    return [m.config_hash, f"{m.V:g}", str(m.seed), str(m.horizon), _num(m.avg_utility),
            _num(m.avg_backlog), _num(m.stability_stat), _num(m.max_avg_power),
            _num(excess.max() if excess.size else 0.0), _num(m.mean_slot_utility),
            str(int(m.approximate))]


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "satdlsa-out"))


def _load(path) -> NetworkConfig:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    cfg = load_config(path)
    violations = validate_config(cfg)
    if violations:
        raise ConfigError(violations)
    return cfg


def _override(cfg: NetworkConfig, args) -> NetworkConfig:
    changes = {}
    if getattr(args, "V", None) is not None:
        changes["control_V"] = float(args.V)
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "horizon", None) is not None:
        changes["horizon"] = args.horizon
    cfg = cfg.replace(**changes)
    violations = validate_config(cfg)
    if violations:
        raise ConfigError(violations)
    return cfg


def _write_fault(out_dir: Path, exc: SimulationFault, tag: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"fault_{tag}.json"
    path.write_text(json.dumps({"error": str(exc), **exc.dump}, indent=1))
    return path


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = _override(_load(args.config), args)
    out_dir = Path(args.out_dir) if args.out_dir else default_output_dir()
    sim = Simulator(cfg, exact_limit=args.exact_limit)
    tag = f"{cfg.config_hash()}_V{cfg.control_V:g}_seed{cfg.seed}"
    trace_rows = [] if args.trace_out else None
    sink = None
    if trace_rows is not None:
        def sink(rec):
            trace_rows.append([str(rec["slot"]), _num(rec["total_backlog"]),
                               *(_num(z) for z in rec["Z"]), _num(rec["objective"]),
                               _num(rec["admitted_sum"])])
    try:
        m = sim.run(trace_sink=sink)
    except SimulationFault as exc:
        path = _write_fault(out_dir, exc, tag)
        print(f"simulation fault: {exc}; diagnostic dump at {path}", file=sys.stderr)
        return EXIT_FAULT
    summary = out_dir / f"run_{tag}.csv"
    write_csv(summary, SUMMARY_COLUMNS, [summary_row(m)])
    if trace_rows is not None:
        header = ["slot", "total_backlog", *(f"Z_{n}" for n in range(cfg.node_count)),
                  "objective", "admitted_sum"]
        write_csv(Path(args.trace_out), header, trace_rows)
    print(f"V={m.V:g} seed={m.seed} horizon={m.horizon}"
          f"{' (approximate link selection)' if m.approximate else ''}")
    print(f"avg_utility    {m.avg_utility:.6f}")
    print(f"avg_backlog    {m.avg_backlog:.4f}")
    print(f"stability_stat {m.stability_stat:.6g}")
    print(f"max_avg_power  {m.max_avg_power:.5f} (budget {cfg.avg_power_budget:g})")
    print(f"summary        {summary}")
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------

@dataclass
class SweepSpec:
    base_config: Path
    V_values: list[float]
    seeds: list[int]
    horizon_override: int | None = None
    output_dir: Path = field(default_factory=default_output_dir)

    def validate(self) -> list[str]:
        out = []
        if not self.V_values:
            out.append("V_values: must be nonempty")
        out += [f"V_values: {v:g} is below 1" for v in self.V_values if v < 1]
        if not self.seeds:
            out.append("seeds: must be nonempty")
        if self.horizon_override is not None and self.horizon_override < 0:
            out.append("horizon_override: must be nonnegative")
        return out


def _sweep_point(cfg: NetworkConfig, exact_limit: int):
    try:
        return Simulator(cfg, exact_limit=exact_limit).run(), None
    except SimulationFault as exc:
        return None, exc


def run_sweep(spec: SweepSpec, workers: int = 1, exact_limit: int = DEFAULT_EXACT_LIMIT):
    """Run every (V, seed) point; returns (base config, metrics, failures).

    Metrics come back sorted by V then seed whatever the worker count.
    """
    problems = spec.validate()
    if problems:
        raise ConfigError(problems)
    base = _load(spec.base_config)
    if spec.horizon_override is not None:
        base = base.replace(horizon=spec.horizon_override)
    points = [base.replace(control_V=float(V), seed=s)
              for V in sorted(set(spec.V_values)) for s in sorted(set(spec.seeds))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_point, points, [exact_limit] * len(points)))
    else:
        outcomes = [_sweep_point(p, exact_limit) for p in points]
    results, failures = [], []
    for cfg, (m, exc) in zip(points, outcomes):
        if exc is None:
            results.append(m)
        else:
            failures.append((cfg, exc))
    return base, results, failures


def cmd_sweep(args) -> int:
    spec = SweepSpec(Path(args.config), list(args.V or PAPER_V_VALUES),
                     list(args.seeds) if args.seeds else [], args.horizon,
                     Path(args.out_dir) if args.out_dir else default_output_dir())
    if not spec.seeds:
        spec.seeds = [_load(spec.base_config).seed]
    base, results, failures = run_sweep(spec, args.workers, args.exact_limit)
    out = spec.output_dir
    write_csv(out / "sweep.csv", SUMMARY_COLUMNS, [summary_row(m) for m in results])
    print(f"wrote {out / 'sweep.csv'} ({len(results)} rows)")
    if len({m.V for m in results}) >= 2:
        report = diagnose_sweep(results, base)
        (out / "report.txt").write_text(report.to_text())
        (out / "report.csv").write_text(report.to_csv())
        print(report.to_text(), end="")
    for cfg, exc in failures:
        path = _write_fault(out, exc, f"V{cfg.control_V:g}_seed{cfg.seed}")
        print(f"run V={cfg.control_V:g} seed={cfg.seed} failed: {exc} ({path})", file=sys.stderr)
    return EXIT_FAULT if failures else EXIT_OK


# --------------------------------------------------------------------------
# trace
# --------------------------------------------------------------------------

def _parse_pair(text: str) -> tuple[int, int]:
    try:
        n, c = text.split(":")
        return int(n), int(c)
    except ValueError:
        raise UsageError(f"bad pair {text!r}; expected node:commodity") from None


def cmd_trace(args) -> int:
    cfg = _override(_load(args.config), args)
    pairs = [_parse_pair(p) for p in args.pairs]
    for n, c in pairs:
        if n == c:
            raise UsageError(f"pair {n}:{c}: destination queue is identically zero")
        if not 0 <= n < cfg.node_count or c not in cfg.commodities:
            raise UsageError(f"unknown pair {n}:{c}")
    if args.slots < 1:
        raise UsageError("--slots must be at least 1")
    col = {c: k for k, c in enumerate(cfg.commodities)}
    rows = []
    sim = Simulator(cfg, exact_limit=args.exact_limit)

    def record(t, state, decision):
        rows.append([str(t + 1), *(_num(state.Q[n, col[c]]) for n, c in pairs)])

    try:
        sim.run(horizon=args.slots, on_slot=record)
    except SimulationFault as exc:
        path = _write_fault(default_output_dir(), exc, "trace")
        print(f"simulation fault: {exc}; diagnostic dump at {path}", file=sys.stderr)
        return EXIT_FAULT
    out = Path(args.out) if args.out else default_output_dir() / f"trace_V{cfg.control_V:g}.csv"
    write_csv(out, ["slot", *(f"Q_{n}_{c}" for n, c in pairs)], rows)
    print(f"wrote {out} ({len(rows)} rows)")
    return EXIT_OK


# --------------------------------------------------------------------------
# check-config / report
# --------------------------------------------------------------------------

def cmd_check_config(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    cfg = load_config(path)
    violations = validate_config(cfg)
    if violations:
        for v in violations:
            print(v)
        return EXIT_CONFIG
    g = build_graph(cfg)
    rep = check_rate_properties(cfg.rate_spec, sorted(set(cfg.channel_spec.alphas)),
                                [cfg.power_cap * k / 12 for k in range(13)])
    print(f"ok: {cfg.node_count} nodes, {len(cfg.links)} links, "
          f"{len(g.undirected_edges)} candidate edges, degree budget {cfg.degree_budget}")
    print(f"config hash {cfg.config_hash()}")
    print(f"mu_max {cfg.mu_max:.6g}  B {compute_B(cfg):.6g}  B/V {compute_B(cfg) / cfg.control_V:.6g}")
    print(f"rate properties: P1 {rep.property1} P2 {rep.property2} P3 {rep.property3} "
          f"(delta {rep.delta:.4g})")
    return EXIT_OK


@dataclass
class SweepRow:
    V: float
    seed: int
    avg_utility: float
    avg_backlog: float
    stability_stat: float
    max_avg_power: float


def read_sweep_csv(path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        return [SweepRow(float(r["V"]), int(r["seed"]), float(r["avg_utility"]),
                         float(r["avg_backlog"]), float(r["stability_stat"]),
                         float(r["max_avg_power"])) for r in csv.DictReader(fh)]


def cmd_report(args) -> int:
    cfg = _load(args.config)
    path = Path(args.sweep_csv)
    if not path.is_file():
        raise UsageError(f"sweep CSV not found: {path}")
    try:
        report = diagnose_sweep(read_sweep_csv(path), cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(report.to_text(), end="")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(report.to_text())
        (out / "report.csv").write_text(report.to_csv())
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="satdlsa", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, sweep=False):
        sp.add_argument("config")
        if not sweep:
            sp.add_argument("--V", type=float)
            sp.add_argument("--seed", type=int)
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--exact-limit", type=int, default=DEFAULT_EXACT_LIMIT,
                        help="largest edge count solved by enumeration (default 20)")

    r = sub.add_parser("run", help="one simulation")
    common(r)
    r.add_argument("--trace-out", help="per-slot trace CSV")
    r.add_argument("--out-dir", help=f"summary directory (default ${OUTPUT_ENV} or ./satdlsa-out)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="V x seed sweep with theory report")
    common(s, sweep=True)
    s.add_argument("--V", type=float, nargs="+", help="V values (default 1 10 100 200 1000 5000)")
    s.add_argument("--seeds", type=int, nargs="+")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("trace", help="per-slot backlog of selected queues")
    common(t)
    t.add_argument("--pairs", nargs="+", required=True, metavar="N:C")
    t.add_argument("--slots", type=int, default=1000)
    t.add_argument("--out")
    t.set_defaults(func=cmd_trace)

    c = sub.add_parser("check-config", help="validate a config file")
    c.add_argument("config")
    c.set_defaults(func=cmd_check_config)

    rp = sub.add_parser("report", help="theory report from a sweep CSV")
    rp.add_argument("sweep_csv")
    rp.add_argument("--config", required=True)
    rp.add_argument("--out-dir")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
