"""Command-line entry point: ``predmon <subcommand> ...``.

Exit codes: 0 success, 1 partial agent failure (or runtime error),
2 invalid configuration or input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import orchestrator, synthetic
from .alerts import build_sinks
from .config import RunConfig, load_config
from .errors import AgentRunError, ConfigError, PredmonError
from .forecaster import fit_forecaster
from .persistence import read_checkpoint, save_checkpoint
from .policy import range_mismatch_lint, save_tables, severity_lint
from .timeseries import load_csv

log = logging.getLogger("predmon")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=args.seed, forecaster=replace(cfg.forecaster, seed=args.seed))
    if getattr(args, "out", None):
        cfg = cfg.with_overrides(output_dir=Path(args.out))
    return cfg


def _dump(obj) -> None:
    print(json.dumps(obj, indent=2, default=str))


def cmd_gen_synthetic(args) -> int:
    frame = synthetic.generate(args.seed, args.steps, args.domain, args.noise)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out)
    if args.tables_out:
        save_tables(synthetic.domain_tables(args.domain).values(), args.tables_out)
    if args.config_out:
        cfg_path = Path(args.config_out)
        data_path = out.resolve()
        tables_path = Path(args.tables_out).resolve() if args.tables_out else None
        raw = {
            "data": {"path": str(data_path), "timestamp_column": "t"},
            "thresholds": str(tables_path) if tables_path else
            [t.to_dict() for t in synthetic.domain_tables(args.domain).values()],
            "episodes": 10,
            "steps_per_episode": 300,
            "seed": args.seed,
            "output_dir": str((cfg_path.parent / f"runs_{args.domain}").resolve()),
        }
        cfg_path.write_text(json.dumps(raw, indent=2) + "\n")
    log.info("wrote %d rows x %d channels to %s", len(frame), len(frame.channels), out)
    return EXIT_OK


def cmd_ingest(args) -> int:
    cfg = _config(args)
    frame = load_csv(cfg.data_path, cfg.ingest)
    warnings = []
    for ch, table in cfg.tables.items():
        warnings += severity_lint(table) + range_mismatch_lint(table, frame.channel(ch))
    _dump({
        "rows": len(frame),
        "channels": list(frame.channels),
        "t_first": frame.timestamps[0].item(),
        "t_last": frame.timestamps[-1].item(),
        "min": dict(zip(frame.channels, frame.values.min(axis=0).tolist())),
        "max": dict(zip(frame.channels, frame.values.max(axis=0).tolist())),
        "warnings": warnings,
    })
    return EXIT_OK


def cmd_train_forecaster(args) -> int:
    cfg = _config(args)
    frame = orchestrator.load_frame(cfg).select(cfg.channels)
    net, report = fit_forecaster(frame, cfg.forecaster)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(net, out / "checkpoints" / "forecaster.ckpt", {"forecaster": asdict(cfg.forecaster)})
    (out / "forecaster_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    rolling = orchestrator.rolling_forecast(net, frame, stride=net.horizon)
    rolling.to_csv(out / "forecast.csv")
    _dump({"final_loss": report.losses[-1] if report.losses else None,
           "per_horizon": report.horizon_metrics, "output_dir": str(out)})
    return EXIT_OK


def _finish_run(result, cfg) -> int:
    out = orchestrator.write_outputs(result, cfg)
    summary = {ch: [r.score for r in reps] for ch, reps in result.reports.items()}
    _dump({"scores": summary, "failed": sorted(result.failures), "output_dir": str(out)})
    return EXIT_PARTIAL if result.failures else EXIT_OK


def cmd_train_agents(args) -> int:
    cfg = _config(args)
    net = None
    if args.forecaster:
        net = read_checkpoint(args.forecaster).model
    result = orchestrator.run_training(cfg, forecaster=net)
    return _finish_run(result, cfg)


def cmd_transfer(args) -> int:
    cfg = _config(args)
    if args.source:
        cfg.transfer.source = args.source
    if not cfg.transfer.source:
        raise ConfigError("transfer needs --source or transfer.source in the config")
    result = orchestrator.run_transfer(cfg.transfer.source, cfg)
    return _finish_run(result, cfg)


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    ev = orchestrator.evaluate(cfg, args.checkpoint)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = ev.to_dict()
    (out / "evaluation.json").write_text(json.dumps(payload, indent=2) + "\n")
    _dump(payload)
    return EXIT_OK


def cmd_monitor(args) -> int:
    cfg = _config(args)
    frame = load_csv(args.frame, cfg.ingest)
    sinks = build_sinks(cfg.sinks or [{"type": "stdout"}], cfg.base_dir)
    ev = orchestrator.monitor(cfg, args.checkpoint, frame, sinks)
    summary = {ch: {"correct_rate": r.correct_rate, "score": r.score} for ch, r in ev.reports.items()}
    print(json.dumps(summary), file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="predmon", description="Forecast-driven multi-agent DQN monitoring.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="write a seeded synthetic corpus")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--out", required=True)
    g.add_argument("--steps", type=int, default=3000)
    g.add_argument("--domain", choices=sorted(synthetic.DOMAINS), default="health")
    g.add_argument("--noise", type=float, default=0.02)
    g.add_argument("--tables-out")
    g.add_argument("--config-out")
    g.set_defaults(func=cmd_gen_synthetic)

    def run_cmd(name, func, help_, seed=True):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True)
        s.add_argument("--out", help="override output directory")
        if seed:
            s.add_argument("--seed", type=int)
        s.set_defaults(func=func)
        return s

    run_cmd("ingest", cmd_ingest, "load and validate the configured CSV", seed=False)
    run_cmd("train-forecaster", cmd_train_forecaster, "train the forecaster only")
    s = run_cmd("train-agents", cmd_train_agents, "train forecaster (or load one) and all agents")
    s.add_argument("--forecaster", help="reuse a forecaster checkpoint")
    s = run_cmd("evaluate", cmd_evaluate, "greedy evaluation of a trained run", seed=False)
    s.add_argument("--checkpoint", required=True)
    s = run_cmd("monitor", cmd_monitor, "greedy run over a frame with live alert dispatch", seed=False)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--frame", required=True)
    s = run_cmd("transfer", cmd_transfer, "retrain source-run agents on a new domain")
    s.add_argument("--source", help="source run or checkpoint directory")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"predmon: invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AgentRunError as e:
        print(f"predmon: {e}", file=sys.stderr)
        return EXIT_PARTIAL
    except (PredmonError, OSError) as e:
        print(f"predmon: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001
        print(f"predmon: unexpected error: {e!r}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
