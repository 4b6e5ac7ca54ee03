"""Long-running Douban-Book reproduction (multi-hour on CPU, not part of CI).

Usage:
    python scripts/reproduce_douban.py --interactions ratings.txt --social trust.txt --out runs/douban

Input files follow the ``prepare`` format: ``user item [rating]`` and
``user user`` per line.  The run prepares an 80/20 split, trains with
scripts/douban.conf and checks test Recall@20 / NDCG@20 against the
published targets within 10% relative.
"""
import argparse
import json
import sys
from pathlib import Path

from sgil.cli import main as sgil

TARGETS = {"recall@20": 0.1809, "ndcg@20": 0.1627}
TOLERANCE = 0.10


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--interactions", required=True)
    p.add_argument("--social", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--rating-threshold", type=float, default=None)
    args = p.parse_args(argv)
    out = Path(args.out)
    conf = Path(__file__).with_name("douban.conf")
    prepare = ["prepare", "--interactions", args.interactions, "--social", args.social,
               "--out", str(out / "snapshot"), "--seed", str(args.seed), "--train-frac", "0.8"]
    if args.rating_threshold is not None:
        prepare += ["--rating-threshold", str(args.rating_threshold)]
    steps = [
        prepare,
        ["-v", "train", "--config", str(conf), "--dataset", str(out / "snapshot"), "--out", str(out / "run"),
         "--seed", str(args.seed), "--threads", str(args.threads)],
        ["evaluate", "--checkpoint", str(out / "run" / "best"), "--dataset", str(out / "snapshot"),
         "--cutoffs", "10,20", "--buckets", "--threads", str(args.threads)],
    ]
    for step in steps:
        code = sgil(step)
        if code:
            return code
    report = json.loads((out / "run" / "best" / "report.json").read_text())
    got = {"recall@20": report["recall"]["20"], "ndcg@20": report["ndcg"]["20"]}
    ok = True
    for name, target in TARGETS.items():
        rel = (got[name] - target) / target
        within = abs(rel) <= TOLERANCE
        ok &= within
        print(f"{name}: {got[name]:.4f} (target {target:.4f}, {rel:+.1%}) {'ok' if within else 'OUT OF RANGE'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
