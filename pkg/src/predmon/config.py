"""Run configuration: JSON file -> validated RunConfig."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

from .agent import AgentConfig
from .errors import ConfigError
from .forecaster import ForecasterConfig
from .policy import ThresholdTable, load_tables, tables_from_json
from .timeseries import IngestConfig

OUTPUT_ENV = "PREDMON_OUTPUT_DIR"

_num = {"type": "number"}
_int = {"type": "integer"}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "predmon run configuration",
    "type": "object",
    "required": ["data", "thresholds"],
    "additionalProperties": False,
    "properties": {
        "data": {
            "type": "object",
            "required": ["path"],
            "additionalProperties": False,
            "properties": {
                "path": {"type": "string"},
                "timestamp_column": {"type": "string"},
                "channels": {"type": ["array", "null"], "items": {"type": "string"}, "minItems": 1},
                "nan_policy": {"enum": ["drop", "error"]},
                "gap_tolerance": {"type": "number", "minimum": 0},
                "allow_gaps": {"type": "boolean"},
            },
        },
        "thresholds": {"oneOf": [{"type": "string"}, {"type": "array", "minItems": 1}]},
        "forecaster": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "window": {**_int, "minimum": 1}, "horizon": {**_int, "minimum": 1},
                "hidden": {**_int, "minimum": 1}, "dropout": {**_num, "minimum": 0, "exclusiveMaximum": 1},
                "batch_size": {**_int, "minimum": 1}, "epochs": {**_int, "minimum": 0},
                "learning_rate": {**_num, "exclusiveMinimum": 0},
                "val_fraction": {**_num, "minimum": 0, "exclusiveMaximum": 1},
                "normalization": {"enum": ["minmax", "zscore"]}, "seed": _int,
            },
        },
        "agent": {"$ref": "#/$defs/agent"},
        "agents": {"type": "object", "additionalProperties": {"$ref": "#/$defs/agent"}},
        "episodes": {**_int, "minimum": 1},
        "steps_per_episode": {**_int, "minimum": 1},
        "replay": {"enum": ["step", "episode"]},
        "reward": {**_num, "exclusiveMinimum": 0},
        "penalty": {**_num, "exclusiveMinimum": 0},
        "state_source": {"enum": ["forecast", "raw"]},
        "horizon_feature": {"type": "boolean"},
        "seed": _int,
        "output_dir": {"type": "string"},
        "parallel": {"type": "boolean"},
        "sinks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["type"],
                "properties": {"type": {"enum": ["stdout", "file", "webhook"]}},
            },
        },
        "transfer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "source": {"type": "string"},
                "reinit_head": {"type": "boolean"},
                "restart_epsilon": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                "channel_map": {"type": "object", "additionalProperties": {"type": "string"}},
            },
        },
    },
    "$defs": {
        "agent": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gamma": {**_num, "minimum": 0, "maximum": 1},
                "epsilon": {**_num, "minimum": 0, "maximum": 1},
                "epsilon_min": {**_num, "minimum": 0, "maximum": 1},
                "epsilon_decay": {**_num, "exclusiveMinimum": 0, "maximum": 1},
                "batch_size": {**_int, "minimum": 1},
                "learning_rate": {**_num, "exclusiveMinimum": 0},
                "hidden": {"type": "array", "items": {**_int, "minimum": 1}},
                "memory_capacity": {**_int, "minimum": 1},
                "seed": _int,
            },
        }
    },
}


@dataclass
class TransferConfig:
    source: str | None = None
    reinit_head: bool = False
    restart_epsilon: float | None = None  # None -> the agent config's starting epsilon
    channel_map: dict[str, str] = field(default_factory=dict)


@dataclass
class RunConfig:
    ingest: IngestConfig
    data_path: Path
    tables: dict[str, ThresholdTable]
    forecaster: ForecasterConfig = field(default_factory=ForecasterConfig)
    agent: dict = field(default_factory=dict)
    agents: dict[str, dict] = field(default_factory=dict)
    episodes: int = 10
    steps_per_episode: int = 300
    replay: str = "step"
    reward: float = 1.0
    penalty: float = 1.0
    state_source: str = "forecast"
    horizon_feature: bool = False
    seed: int = 0
    output_dir: Path = Path("runs/default")
    parallel: bool = False
    sinks: list[dict] = field(default_factory=list)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict)

    @property
    def channels(self) -> list[str]:
        return list(self.ingest.channels or self.tables)

    def agent_config(self, channel: str) -> AgentConfig:
        """Per-channel agent config; the seed defaults to one derived from (run seed, channel)."""
        merged = {**self.agent, **self.agents.get(channel, {})}
        merged.setdefault("seed", derive_seed(self.seed, channel))
        try:
            return AgentConfig(**merged)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def with_overrides(self, **kw) -> "RunConfig":
        c = copy.copy(self)
        for k, v in kw.items():
            setattr(c, k, v)
        return c


def derive_seed(seed: int, channel: str) -> int:
    digest = hashlib.sha256(f"{seed}:{channel}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def parse_config(raw: dict, base_dir: str | Path = ".") -> RunConfig:
    base = Path(base_dir)
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as e:
        loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{loc}: {e.message}") from None
    d = raw["data"]
    ingest = IngestConfig(
        timestamp_column=d.get("timestamp_column", "t"),
        channels=d.get("channels"),
        nan_policy=d.get("nan_policy", "drop"),
        gap_tolerance=d.get("gap_tolerance", 0.0),
        allow_gaps=d.get("allow_gaps", False),
    )
    try:
        th = raw["thresholds"]
        tables = load_tables(_resolve(base, th)) if isinstance(th, str) else tables_from_json(th)
    except (OSError, ValueError, KeyError) as e:
        raise ConfigError(f"thresholds: {e}") from None
    channels = ingest.channels or list(tables)
    missing = [c for c in channels if c not in tables]
    if missing:
        raise ConfigError(f"no threshold table for channel(s): {', '.join(missing)}")
    if ingest.channels is None:
        ingest.channels = list(tables)
    unknown = set(raw.get("agents", {})) - set(channels)
    if unknown:
        raise ConfigError(f"agent overrides for unmonitored channel(s): {', '.join(sorted(unknown))}")
    out = os.environ.get(OUTPUT_ENV) or raw.get("output_dir", "runs/default")
    tr = raw.get("transfer", {})
    cfg = RunConfig(
        ingest=ingest,
        data_path=_resolve(base, d["path"]),
        tables={c: tables[c] for c in channels},
        forecaster=ForecasterConfig(**raw.get("forecaster", {})),
        agent=dict(raw.get("agent", {})),
        agents={k: dict(v) for k, v in raw.get("agents", {}).items()},
        episodes=raw.get("episodes", 10),
        steps_per_episode=raw.get("steps_per_episode", 300),
        replay=raw.get("replay", "step"),
        reward=float(raw.get("reward", 1.0)),
        penalty=float(raw.get("penalty", 1.0)),
        state_source=raw.get("state_source", "forecast"),
        horizon_feature=raw.get("horizon_feature", False),
        seed=raw.get("seed", 0),
        output_dir=_resolve(base, out),
        parallel=raw.get("parallel", False),
        sinks=list(raw.get("sinks", [])),
        transfer=TransferConfig(
            source=str(_resolve(base, tr["source"])) if tr.get("source") else None,
            reinit_head=tr.get("reinit_head", False),
            restart_epsilon=tr.get("restart_epsilon"),
            channel_map=dict(tr.get("channel_map", {})),
        ),
        base_dir=base,
        raw=raw,
    )
    for c in channels:
        cfg.agent_config(c)  # surface bad agent settings now, not mid-run
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None
    return parse_config(raw, path.parent)


def config_snapshot(cfg: RunConfig) -> dict:
    return {"forecaster": asdict(cfg.forecaster), "episodes": cfg.episodes,
            "steps_per_episode": cfg.steps_per_episode, "replay": cfg.replay, "seed": cfg.seed,
            "reward": cfg.reward, "penalty": cfg.penalty, "state_source": cfg.state_source}
