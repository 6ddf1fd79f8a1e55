"""Full pipeline on the synthetic corpora: train on the health domain, evaluate, transfer to the city domain.

    python3 scripts/run_experiment.py --workdir runs/experiment
"""
import argparse
import json
import time
from pathlib import Path

from predmon import orchestrator as orch
from predmon.config import parse_config
from predmon.policy import save_tables
from predmon.synthetic import domain_tables, generate


def corpus(d: Path, seed: int, domain: str, episodes: int, steps: int):
    d.mkdir(parents=True, exist_ok=True)
    generate(seed=seed, steps=3000, domain=domain).to_csv(d / "data.csv")
    save_tables(domain_tables(domain).values(), d / "tables.json")
    return parse_config({"data": {"path": "data.csv"}, "thresholds": "tables.json", "episodes": episodes,
                         "steps_per_episode": steps, "seed": seed, "output_dir": "run"}, d)


def curves(result):
    return {ch: [r.score for r in reps] for ch, reps in result.reports.items()}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", default="runs/experiment")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--transfer-seed", type=int, default=12)
    ap.add_argument("--episodes", type=int, default=10)
    ap.add_argument("--steps", type=int, default=300)
    args = ap.parse_args()
    root = Path(args.workdir)

    t0 = time.perf_counter()
    cfg = corpus(root / "health", args.seed, "health", args.episodes, args.steps)
    res = orch.run_training(cfg)
    out = orch.write_outputs(res, cfg)
    print(f"health training ({time.perf_counter() - t0:.1f}s):")
    for ch, scores in curves(res).items():
        print(f"  {ch:<14} " + " ".join(f"{s:6.0f}" for s in scores))

    ev = orch.evaluate(cfg, out)
    print("greedy evaluation:")
    for ch, r in ev.reports.items():
        print(f"  {ch:<14} score={r.score:.0f}/{r.max_score:.0f} correct_rate={r.correct_rate:.3f}")
    for k, m in enumerate(ev.forecaster_metrics, 1):
        print(f"  forecast h{k}: mae={m['mae']:.3f} mape={m['mape']:.2f}% rmse={m['rmse']:.3f}")
    (out / "evaluation.json").write_text(json.dumps(ev.to_dict(), indent=2) + "\n")

    t0 = time.perf_counter()
    tcfg = corpus(root / "city", args.transfer_seed, "city", args.episodes, args.steps)
    tres = orch.run_transfer(out, tcfg)
    orch.write_outputs(tres, tcfg)
    print(f"transfer to city ({time.perf_counter() - t0:.1f}s):")
    for ch, scores in curves(tres).items():
        print(f"  {ch:<14} " + " ".join(f"{s:6.0f}" for s in scores))


if __name__ == "__main__":
    main()
