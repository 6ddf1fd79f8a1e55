"""Multi-agent training and evaluation driver.

One environment and one DQN agent per monitored channel. Agents never share
state, and each draws from its own RNG seeded from (run seed, channel name),
so running them in parallel or in any order gives identical reports.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .agent import DQNAgent
from .alerts import AlertEvent, build_sinks, dispatch_alert
from .config import RunConfig, config_snapshot
from .environment import MonitorEnv, episode_max_reward
from .errors import AgentRunError, CheckpointMissing, ShapeMismatch
from .forecaster import ForecastNetwork, fit_forecaster, holdout_metrics, rolling_forecast
from .metrics import cumulative_reward
from .persistence import read_checkpoint, save_checkpoint
from .timeseries import TimeSeriesFrame, fit_normalizer, load_csv

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("episode", "agent", "score", "steps", "correct_rate", "epsilon")


@dataclass
class EpisodeReport:
    episode: int
    agent: str
    score: float
    steps: int
    correct_rate: float
    epsilon: float
    max_score: float = 0.0
    duration: float = 0.0
    transfer: bool = False

    def row(self) -> list:
        return [self.episode, self.agent, repr(float(self.score)), self.steps,
                repr(float(self.correct_rate)), repr(float(self.epsilon))]


@dataclass
class ChannelData:
    states: np.ndarray
    timestamps: np.ndarray
    horizon_steps: np.ndarray | None
    obs_shift: float
    obs_scale: float


@dataclass
class RunResult:
    reports: dict[str, list[EpisodeReport]]
    agents: dict[str, object]
    envs: dict[str, MonitorEnv]
    forecaster: ForecastNetwork | None = None
    forecaster_report: object = None
    failures: dict[str, AgentRunError] = field(default_factory=dict)
    probes: dict[str, np.ndarray] = field(default_factory=dict)  # Q-outputs before any training

    @property
    def ok(self) -> bool:
        return not self.failures


AgentFactory = Callable[[str, MonitorEnv, RunConfig], object]


def run_episodes(env: MonitorEnv, agent, episodes: int, replay: str = "step", channel: str = "",
                 transfer: bool = False) -> list[EpisodeReport]:
    """The act -> step -> memorize loop for one agent.

    ``replay="episode"`` calls replay once after each episode; ``"step"``
    calls it after every memorized transition. Either way replay only starts
    once memory holds a full batch.
    """
    if replay not in ("step", "episode"):
        raise ValueError(f"replay must be 'step' or 'episode', not {replay!r}")
    batch = getattr(getattr(agent, "config", None), "batch_size", 32)
    reports = []
    for m in range(1, episodes + 1):
        t0 = time.perf_counter()
        state = env.reset()
        rewards, correct = [], 0
        for _ in range(env.episode_steps()):
            action = agent.act(state)
            res = env.step(action)
            agent.memorize(state, action, res.reward, res.next_state, res.done)
            rewards.append(res.reward)
            correct += action == res.info["correct_action"]
            state = res.next_state
            if replay == "step" and len(agent.memory) >= batch:
                agent.replay(batch)
            if res.done:
                break
        if replay == "episode" and len(agent.memory) >= batch:
            agent.replay(batch)
        reports.append(_report(m, channel, rewards, correct, agent, env, time.perf_counter() - t0, transfer))
    return reports


def _report(m, channel, rewards, correct, agent, env, duration, transfer) -> EpisodeReport:
    steps = len(rewards)
    score = cumulative_reward(rewards)
    rate = correct / steps if steps else 0.0
    if env.reward == env.penalty and steps:
        identity = (steps + score / env.reward) / (2 * steps)
        assert math.isclose(rate, identity, rel_tol=0, abs_tol=1e-12), (rate, identity)
    return EpisodeReport(m, channel, score, steps, rate, float(getattr(agent, "epsilon", 0.0)),
                         episode_max_reward(env), duration, transfer)


def greedy_episode(env: MonitorEnv, agent, channel: str = "", sinks=(), timestamps=None) -> EpisodeReport:
    """One episode with exploration off and no learning; alerts go to ``sinks``."""
    t0 = time.perf_counter()
    state = env.reset()
    rewards, correct = [], 0
    for _ in range(env.episode_steps()):
        action = agent.greedy(state)
        res = env.step(action)
        rewards.append(res.reward)
        correct += action == res.info["correct_action"]
        if sinks:
            t = res.info["t"]
            ts = float(timestamps[t]) if timestamps is not None else float(t)
            ev = AlertEvent.from_action(env.table, res.info["value"], action, ts, env.episode, t)
            dispatch_alert(ev, sinks)
        state = res.next_state
        if res.done:
            break
    rep = _report(1, channel, rewards, correct, agent, env, time.perf_counter() - t0, False)
    rep.epsilon = 0.0
    return rep


def load_frame(config: RunConfig) -> TimeSeriesFrame:
    return load_csv(config.data_path, config.ingest)


def channel_data(config: RunConfig, frame: TimeSeriesFrame, net: ForecastNetwork | None) -> dict[str, ChannelData]:
    """State sequences per channel plus the affine map used to scale agent observations.

    Observations are centred to roughly [-1, 1] using the forecaster's
    fitted range (or the raw frame's range when no forecaster is used).
    """
    out = {}
    if config.state_source == "forecast":
        if net is None:
            raise ValueError("state_source='forecast' needs a forecaster")
        fc = rolling_forecast(net, frame, stride=net.horizon)
        if net.norm is not None and net.norm.method == "minmax":
            lo = dict(zip(net.channels, net.norm.shift))
            span = dict(zip(net.channels, net.norm.scale))
        else:
            norm = fit_normalizer(frame, "minmax")
            lo = dict(zip(frame.channels, norm.shift))
            span = dict(zip(frame.channels, norm.scale))
        for ch in frame.channels:
            half = float(span[ch]) / 2
            out[ch] = ChannelData(fc.channel(ch), fc.target_t, fc.horizon_step, float(lo[ch]) + half, half)
    else:
        norm = fit_normalizer(frame, "minmax")
        for j, ch in enumerate(frame.channels):
            lo, rng = float(norm.shift[j]), float(norm.scale[j])
            out[ch] = ChannelData(frame.values[:, j], frame.timestamps, None, lo + rng / 2, rng / 2)
    return out


def make_env(config: RunConfig, channel: str, data: ChannelData, log_steps: bool = True,
             full_sequence: bool = False) -> MonitorEnv:
    length = max(len(data.states), 1) if full_sequence else config.steps_per_episode
    return MonitorEnv(
        data.states, config.tables[channel], length, config.reward, config.penalty,
        data.obs_shift, data.obs_scale,
        data.horizon_steps if config.horizon_feature else None,
        config.forecaster.horizon, log_steps,
    )


def default_agent_factory(channel: str, env: MonitorEnv, config: RunConfig) -> DQNAgent:
    return DQNAgent(env.state_dim, env.n_actions, config.agent_config(channel))


def train_forecaster_for(config: RunConfig, frame: TimeSeriesFrame):
    if config.state_source != "forecast":
        return None, None
    return fit_forecaster(frame, config.forecaster)


def run_training(config: RunConfig, agent_factory: AgentFactory | None = None,
                 forecaster: ForecastNetwork | None = None, frame: TimeSeriesFrame | None = None,
                 transfer: bool = False) -> RunResult:
    frame = frame if frame is not None else load_frame(config)
    frame = frame.select(config.channels)
    f_report = None
    if forecaster is None and config.state_source == "forecast":
        forecaster, f_report = train_forecaster_for(config, frame)
    data = channel_data(config, frame, forecaster)
    factory = agent_factory or default_agent_factory
    envs = {ch: make_env(config, ch, data[ch]) for ch in config.channels}

    def one(ch):
        try:
            agent = factory(ch, envs[ch], config)
            return ch, agent, run_episodes(envs[ch], agent, config.episodes, config.replay, ch, transfer), None
        except Exception as e:
            log.error("agent %s failed: %s", ch, e)
            return ch, None, None, AgentRunError(ch, e)

    if config.parallel and len(envs) > 1:
        with ThreadPoolExecutor(max_workers=len(envs)) as pool:
            results = list(pool.map(one, config.channels))
    else:
        results = [one(ch) for ch in config.channels]
    res = RunResult({}, {}, envs, forecaster, f_report)
    for ch, agent, reports, err in results:
        if err is not None:
            res.failures[ch] = err
        else:
            res.agents[ch] = agent
            res.reports[ch] = reports
    return res


def write_reports(reports: dict[str, list[EpisodeReport]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for ch in reports:
            for r in reports[ch]:
                w.writerow(r.row())


def write_outputs(result: RunResult, config: RunConfig, out_dir: str | Path | None = None) -> Path:
    out = Path(out_dir or config.output_dir)
    ck = out / "checkpoints"
    ck.mkdir(parents=True, exist_ok=True)
    write_reports(result.reports, out / "reports.csv")
    (ck / "channels.json").write_text(json.dumps(list(config.channels)) + "\n")
    for ch, env in result.envs.items():
        if ch in result.agents:
            with open(out / f"steps_{ch}.jsonl", "w", encoding="utf-8") as fh:
                env.write_step_log(fh)
    snap = config_snapshot(config)
    if result.forecaster is not None:
        save_checkpoint(result.forecaster, ck / "forecaster.ckpt", snap)
    if result.forecaster_report is not None:
        (out / "forecaster_report.json").write_text(json.dumps(result.forecaster_report.to_dict(), indent=2) + "\n")
    for ch, agent in result.agents.items():
        if isinstance(agent, DQNAgent):
            save_checkpoint(agent.model, ck / f"agent_{ch}.ckpt", snap, {
                "channel": ch,
                "agent_config": agent.config.to_dict(),
                "epsilon_start": agent.epsilon_start,
                "n_decays": agent.n_decays,
                "table": config.tables[ch].to_dict(),
                "obs_shift": result.envs[ch].obs_shift,
                "obs_scale": result.envs[ch].obs_scale,
            })
    if result.failures:
        (out / "failures.json").write_text(
            json.dumps({ch: repr(e.cause) for ch, e in result.failures.items()}, indent=2) + "\n")
    return out


def _agent_from_checkpoint(path: Path, config: RunConfig, channel: str) -> DQNAgent:
    ck = read_checkpoint(path)
    agent = DQNAgent(ck.model.state_dim, ck.model.n_actions, config.agent_config(channel), network=ck.model)
    agent.epsilon_start = ck.extra.get("epsilon_start", agent.epsilon_start)
    agent.n_decays = ck.extra.get("n_decays", 0)
    return agent


def load_run(checkpoint_dir: str | Path, config: RunConfig):
    """Load the forecaster and every channel's agent from a run's checkpoint directory."""
    d = Path(checkpoint_dir)
    if (d / "checkpoints").is_dir():
        d = d / "checkpoints"
    if not d.is_dir():
        raise CheckpointMissing(str(checkpoint_dir))
    net = None
    if config.state_source == "forecast":
        net = read_checkpoint(d / "forecaster.ckpt").model
    agents = {ch: _agent_from_checkpoint(d / f"agent_{ch}.ckpt", config, ch) for ch in config.channels}
    return net, agents


@dataclass
class Evaluation:
    reports: dict[str, EpisodeReport]
    forecaster_metrics: list | None
    forecaster_aggregate: dict | None

    def to_dict(self) -> dict:
        return {"agents": {ch: asdict(r) | {"duration": None} for ch, r in self.reports.items()},
                "forecaster": {"per_horizon": self.forecaster_metrics, "aggregate": self.forecaster_aggregate}}


def evaluate(config: RunConfig, checkpoint: str | Path, frame: TimeSeriesFrame | None = None,
             sinks=(), full_sequence: bool = False) -> Evaluation:
    """Greedy episode per channel (one episode length, or the whole sequence) plus forecaster metrics."""
    net, agents = load_run(checkpoint, config)
    frame = (frame if frame is not None else load_frame(config)).select(config.channels)
    data = channel_data(config, frame, net)
    reports = {}
    for ch in config.channels:
        env = make_env(config, ch, data[ch], log_steps=False, full_sequence=full_sequence)
        reports[ch] = greedy_episode(env, agents[ch], ch, sinks, data[ch].timestamps)
    per_h = agg = None
    if net is not None:
        per_h, agg = holdout_metrics(net, frame, config.forecaster.val_fraction)
    return Evaluation(reports, per_h, agg)


def monitor(config: RunConfig, checkpoint: str | Path, frame: TimeSeriesFrame, sinks=None) -> Evaluation:
    """Greedy pass over the whole of ``frame`` with live alert dispatch."""
    if sinks is None:
        sinks = build_sinks(config.sinks, config.base_dir)
    return evaluate(config, checkpoint, frame, sinks, full_sequence=True)


def run_transfer(source_checkpoint: str | Path, config: RunConfig, frame: TimeSeriesFrame | None = None,
                 forecaster: ForecastNetwork | None = None, probe_states=None) -> RunResult:
    """Initialize target agents from source Q-networks, then train on the target domain.

    Target channel -> source channel comes from ``transfer.channel_map``,
    else the same name, else the same position in the source run.
    If ``probe_states`` is given, each new agent's Q-outputs on them are
    recorded in ``result.probes`` before its first training step.
    """
    src = Path(source_checkpoint)
    if (src / "checkpoints").is_dir():
        src = src / "checkpoints"
    if not src.is_dir():
        raise CheckpointMissing(str(source_checkpoint))
    available = sorted(p.name[len("agent_"):-len(".ckpt")] for p in src.glob("agent_*.ckpt"))
    order = _source_order(src, available)
    tcfg = config.transfer

    def source_for(ch: str, idx: int) -> str:
        if ch in tcfg.channel_map:
            return tcfg.channel_map[ch]
        if ch in available:
            return ch
        if idx < len(order):
            return order[idx]
        raise CheckpointMissing(f"no source agent for target channel {ch!r}")

    # resolve and shape-check everything before training anything
    plan = {}
    for idx, ch in enumerate(config.channels):
        ck = read_checkpoint(src / f"agent_{source_for(ch, idx)}.ckpt")
        plan[ch] = ck.model

    def factory(ch: str, env: MonitorEnv, cfg: RunConfig) -> DQNAgent:
        model = plan[ch]
        acfg = cfg.agent_config(ch)
        if model.state_dim != env.state_dim or model.n_actions != env.n_actions:
            if not tcfg.reinit_head:
                raise ShapeMismatch(f"{ch}: source net ({model.state_dim} -> {model.n_actions}) vs target "
                                    f"({env.state_dim} -> {env.n_actions}); set transfer.reinit_head")
            model = _reinit_head(model, env.state_dim, env.n_actions, acfg)
        agent = DQNAgent(env.state_dim, env.n_actions, acfg, network=model.copy())
        agent.restart_exploration(tcfg.restart_epsilon)
        if probe_states is not None:
            probes[ch] = agent.model.predict(np.asarray(probe_states, dtype=np.float64))
        return agent

    for ch, model in plan.items():
        tab = config.tables[ch]
        if model.n_actions != tab.n_actions and not tcfg.reinit_head:
            raise ShapeMismatch(f"{ch}: source has {model.n_actions} actions, target table has {tab.n_actions}")
    probes: dict[str, np.ndarray] = {}
    result = run_training(config, factory, forecaster, frame, transfer=True)
    result.probes = probes
    return result


def _source_order(src: Path, available: list[str]) -> list[str]:
    meta = src / "channels.json"
    if meta.is_file():
        return json.loads(meta.read_text())
    return available


def _reinit_head(model, state_dim: int, n_actions: int, acfg):
    from .agent import QNetwork
    from .neural import AdamState, DenseLayer
    rng = np.random.default_rng(acfg.seed)
    layers = [DenseLayer(l.weights.copy(), l.biases.copy(), l.activation) for l in model.layers]
    if layers[0].n_in != state_dim:
        layers[0] = DenseLayer.init(state_dim, layers[0].n_out, layers[0].activation, rng)
    layers[-1] = DenseLayer.init(layers[-1].n_in, n_actions, "identity", rng)
    return QNetwork(layers, AdamState(lr=acfg.learning_rate))
