"""K x beta sensitivity grid on the planted noisy graph.

    python scripts/sensitivity_grid.py --out runs/grid --k 1,2,3,4,5 --betas 0,0.05,0.1,0.15,0.2
"""
import argparse
from pathlib import Path

from sgil.config import TrainConfig
from sgil.evaluator import sensitivity_grid, write_grid_csv
from sgil.synthetic import DESK_DATA, DESK_TRAIN, planted_dataset


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/grid")
    p.add_argument("--k", default="1,2,3,4,5")
    p.add_argument("--betas", default="0,0.05,0.1,0.15,0.2")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    ks = [int(k) for k in args.k.split(",")]
    betas = [float(b) for b in args.betas.split(",")]
    ds = planted_dataset(args.seed, **DESK_DATA)
    cfg = TrainConfig(**{**DESK_TRAIN, "seed": args.seed})
    grid = sensitivity_grid(cfg, ds.store, ds.noisy, ks, betas, metric="ndcg@10")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_grid_csv(out / "grid.csv", grid, ks, betas, "ndcg@10")
    print((out / "grid.csv").read_text())


if __name__ == "__main__":
    main()
