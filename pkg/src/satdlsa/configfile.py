"""Read and write the plain-text network config format.

Example (the bundled ``paper_fig2.cfg``)::

    [network]
    nodes = 4
    links = full_mesh          ; or: listed -> take links from [links]
    out_degree_limit = 2
    in_degree_limit = 2
    commodities = all          ; or: 0 2 3
    admitting_pairs = all      ; or: 1:0 2:0  (node:commodity)

    [limits]
    admission_cap = 6
    power_cap = 6
    avg_power_budget = 4

    [functions]
    utility = log1p            ; log1p [weight] | pow <exponent> [weight]
    rate = log-linear          ; log-linear | linear

    [control]
    V = 100
    horizon = 100000
    seed = 1

    [states]                   ; label = alpha probability
    G = 3 0.25
    ...

    [links]                    ; "i j" alone, or "i j = p1 p2 ..." to override
    0 1 = 0.7 0.1 0.1 0.1      ; that link's state probabilities

    [utility]                  ; per-pair overrides, "n c = descriptor"
    1 0 = pow 0.5

Keys and section names are case-sensitive.
"""

from __future__ import annotations

import configparser
from importlib import resources
from pathlib import Path

from .channel import RATE_KINDS, ChannelSpec
from .model import ConfigError, NetworkConfig, full_mesh, parse_utility

REQUIRED = {
    "network": ("nodes", "out_degree_limit", "in_degree_limit"),
    "limits": ("admission_cap", "power_cap", "avg_power_budget"),
}


def bundled_config_path(name: str = "paper_fig2.cfg") -> Path:
    return Path(str(resources.files("satdlsa") / "data" / name))


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(allow_no_value=True, inline_comment_prefixes=(";", "#"),
                                  interpolation=None, delimiters=("=",))
    p.optionxform = str
    return p


def _pair(text: str, sep=None) -> tuple[int, int]:
    a, b = text.split(sep) if sep else text.split()
    return int(a), int(b)


def loads_config(text: str, source: str = "<string>") -> NetworkConfig:
    p = _parser()
    try:
        p.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    problems = []
    for section, keys in REQUIRED.items():
        for key in keys:
            if not p.has_option(section, key):
                problems.append(f"{section}.{key}: missing")
    if not p.has_section("states") or not p.items("states"):
        problems.append("states: at least one link state required")
    if problems:
        raise ConfigError(problems)

    try:
        net = p["network"]
        n = net.getint("nodes")
        labels, alphas, default_probs = [], [], []
        for label, row in p.items("states"):
            a, prob = row.split()
            labels.append(label)
            alphas.append(float(a))
            default_probs.append(float(prob))

        link_mode = net.get("links", "full_mesh").strip()
        overrides = {}
        listed = set()
        if p.has_section("links"):
            for key, row in p.items("links"):
                link = _pair(key)
                listed.add(link)
                if row:
                    overrides[link] = tuple(float(x) for x in row.split())
        if link_mode == "full_mesh":
            links = set(full_mesh(n))
        elif link_mode == "listed":
            links = listed
        else:
            raise ConfigError([f"network.links: expected full_mesh or listed, got {link_mode!r}"])
        probs = {link: overrides.get(link, tuple(default_probs)) for link in sorted(links)}
        for link in overrides:
            if link not in links:
                probs[link] = overrides[link]

        com_text = net.get("commodities", "all").strip()
        commodities = None if com_text == "all" else tuple(int(x) for x in com_text.split())
        pair_text = net.get("admitting_pairs", "all").strip()
        pairs = None if pair_text == "all" else [_pair(x, ":") for x in pair_text.split()]

        fn = p["functions"] if p.has_section("functions") else {}
        utility = parse_utility(fn.get("utility", "log1p"))
        rate_kind = fn.get("rate", "log-linear").strip()
        if rate_kind not in RATE_KINDS:
            raise ConfigError([f"functions.rate: unknown rate kind {rate_kind!r}"])
        u_over = {}
        if p.has_section("utility"):
            for key, row in p.items("utility"):
                u_over[_pair(key)] = parse_utility(row)

        ctl = p["control"] if p.has_section("control") else None
        lim = p["limits"]
        return NetworkConfig(
            node_count=n,
            links=frozenset(links),
            out_degree_limit=net.getint("out_degree_limit"),
            in_degree_limit=net.getint("in_degree_limit"),
            admission_cap=lim.getfloat("admission_cap"),
            power_cap=lim.getfloat("power_cap"),
            avg_power_budget=lim.getfloat("avg_power_budget"),
            channel_spec=ChannelSpec(tuple(labels), tuple(alphas), probs),
            commodities=commodities,
            admitting_pairs=None if pairs is None else frozenset(pairs),
            utility=utility,
            utility_overrides=u_over,
            rate_spec=RATE_KINDS[rate_kind](),
            control_V=ctl.getfloat("V", 100.0) if ctl else 100.0,
            horizon=ctl.getint("horizon", 100_000) if ctl else 100_000,
            seed=ctl.getint("seed", 1) if ctl else 1,
        )
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError([f"syntax: {exc}"]) from None


def load_config(path) -> NetworkConfig:
    path = Path(path)
    return loads_config(path.read_text(), source=str(path))


def dumps_config(cfg: NetworkConfig) -> str:
    """Serialize with every link listed, so any valid config round-trips."""
    spec = cfg.channel_spec
    out = [
        "[network]",
        f"nodes = {cfg.node_count}",
        "links = listed",
        f"out_degree_limit = {cfg.out_degree_limit}",
        f"in_degree_limit = {cfg.in_degree_limit}",
        "commodities = " + " ".join(str(c) for c in cfg.commodities),
        "admitting_pairs = " + " ".join(f"{n}:{c}" for n, c in sorted(cfg.admitting_pairs)),
        "",
        "[limits]",
        f"admission_cap = {cfg.admission_cap!r}",
        f"power_cap = {cfg.power_cap!r}",
        f"avg_power_budget = {cfg.avg_power_budget!r}",
        "",
        "[functions]",
        f"utility = {cfg.utility.describe()}",
        f"rate = {cfg.rate_spec.kind}",
        "",
        "[control]",
        f"V = {cfg.control_V!r}",
        f"horizon = {cfg.horizon}",
        f"seed = {cfg.seed}",
        "",
        "[states]",
    ]
    first = spec.probabilities[min(spec.probabilities)] if spec.probabilities else [0.0] * len(spec.labels)
    for label, a, prob in zip(spec.labels, spec.alphas, first):
        out.append(f"{label} = {a!r} {prob!r}")
    out += ["", "[links]"]
    for link in sorted(cfg.links):
        probs = spec.probabilities.get(link)
        if probs is None or tuple(probs) == tuple(first):
            out.append(f"{link[0]} {link[1]}")
        else:
            out.append(f"{link[0]} {link[1]} = " + " ".join(repr(x) for x in probs))
    if cfg.utility_overrides:
        out += ["", "[utility]"]
        for (n, c), u in sorted(cfg.utility_overrides.items()):
            out.append(f"{n} {c} = {u.describe()}")
    return "\n".join(out) + "\n"
