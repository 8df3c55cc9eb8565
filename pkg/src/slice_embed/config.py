"""Flat ``key = value`` experiment config files with dotted keys.

    # comment
    topology.server_count = 20
    workload.cpu_demand_range = 0.5, 2.0
    sweep.k_rel = 1..10
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .admission import BOUND_MODES, DELAY_MODES, ExperimentConfig, SweepCell
from .slice_model import WorkloadParams
from .substrate import ConfigurationError, TopologyConfig


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = f"{path or '<config>'}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.line = line


def _int(text):
    return int(text)


def _float(text):
    return float(text)


def _pair(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError("expected 'low, high'")
    return tuple(parts)


def _int_list(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _float_list(text):
    return [float(p) for p in text.split(",")]


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true/false")


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


KEYS = {
    "topology.server_count": _int,
    "topology.servers_per_edge_switch": _int,
    "topology.edge_switch_count": _int,
    "topology.aggregation_switch_count": _int,
    "topology.datacenter_switch_count": _int,
    "topology.cpu_per_server": _float,
    "topology.server_edge_bw": _float,
    "topology.edge_agg_bw": _float,
    "topology.agg_dc_bw": _float,
    "topology.delay_init.server_edge": _float,
    "topology.delay_init.edge_agg": _float,
    "topology.delay_init.agg_dc": _float,
    "workload.request_count": _int,
    "workload.vnfs_per_slice": _int,
    "workload.cpu_demand_range": _pair,
    "workload.bw_demand_range": _pair,
    "workload.proc_delay_range": _pair,
    "bound_mode": _choice(BOUND_MODES),
    "bw_bound_ratio": _float,
    "delay_mode": _choice(DELAY_MODES),
    "sweep.k_rel": _int_list,
    "sweep.d_e2e": _float_list,
    "seeds": _int_list,
    "solver.node_limit": _int,
    "jobs": _int,
    "output.dir": str,
    "report.wall_clock": _bool,
}

REQUIRED = (
    "topology.server_count",
    "topology.servers_per_edge_switch",
    "topology.edge_switch_count",
    "topology.aggregation_switch_count",
    "topology.datacenter_switch_count",
    "sweep.k_rel",
    "sweep.d_e2e",
)


@dataclass
class LoadedConfig:
    experiment: ExperimentConfig
    out_dir: Path
    wall_clock: bool = False
    source: dict | None = None


def parse_config(text: str, path: str | None = None) -> LoadedConfig:
    values: dict = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno, path)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, path)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})",
                              lineno, path)
        try:
            values[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno, path) from None
        lines[key] = lineno
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}", None, path)

    topo = TopologyConfig()
    delay_init = dict(topo.delay_init)
    topo_kwargs = {}
    for key, value in values.items():
        if key.startswith("topology.delay_init."):
            delay_init[key.rsplit(".", 1)[1].replace("_", "-")] = value
        elif key.startswith("topology."):
            topo_kwargs[key.split(".", 1)[1]] = value
    topo = replace(topo, delay_init=delay_init, **topo_kwargs)

    work_kwargs = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("workload.")}
    workload = replace(WorkloadParams(), **work_kwargs)

    cells = [SweepCell(k, d) for k in values["sweep.k_rel"] for d in values["sweep.d_e2e"]]
    experiment = ExperimentConfig(
        topology=topo,
        workload=workload,
        bound_mode=values.get("bound_mode", "cpu"),
        delay_mode=values.get("delay_mode", "recompute"),
        sweep=cells,
        seeds=values.get("seeds", [0, 1, 2, 3]),
        bw_bound_ratio=values.get("bw_bound_ratio", 0.4),
        node_limit=values.get("solver.node_limit", ExperimentConfig.node_limit),
        jobs=values.get("jobs", 1),
    )
    try:
        experiment.validate()
    except (ConfigurationError, ValueError) as exc:
        key_line = None
        for key in lines:
            if key.split(".")[-1] in str(exc):
                key_line = lines[key]
                break
        raise ConfigError(str(exc), key_line, path) from None
    return LoadedConfig(experiment, Path(values.get("output.dir", "results")),
                        values.get("report.wall_clock", False), values)


def load_config(path: str | Path) -> LoadedConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path))
