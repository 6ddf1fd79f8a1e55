"""Episode-1 vs episode-10 scores across corpus/run seeds (how seed-sensitive the learning curves are).

    python3 scripts/seed_sweep.py --seeds 11 12 13
"""
import argparse
import tempfile
from pathlib import Path

from predmon import orchestrator as orch
from predmon.config import parse_config
from predmon.policy import save_tables
from predmon.synthetic import domain_tables, generate


def one(seed: int, domain: str, replay: str):
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        generate(seed=seed, steps=3000, domain=domain).to_csv(d / "data.csv")
        save_tables(domain_tables(domain).values(), d / "tables.json")
        cfg = parse_config({"data": {"path": "data.csv"}, "thresholds": "tables.json", "seed": seed,
                            "replay": replay, "output_dir": "run"}, d)
        return orch.run_training(cfg).reports


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[11, 12, 13])
    ap.add_argument("--domain", default="health")
    ap.add_argument("--replay", choices=["step", "episode"], default="step")
    args = ap.parse_args()
    print("seed,agent,ep1,ep10,max,ep10_ge_80pct")
    for seed in args.seeds:
        for ch, reps in one(seed, args.domain, args.replay).items():
            first, last, top = reps[0].score, reps[-1].score, reps[-1].max_score
            print(f"{seed},{ch},{first:g},{last:g},{top:g},{last >= 0.8 * top}")


if __name__ == "__main__":
    main()
