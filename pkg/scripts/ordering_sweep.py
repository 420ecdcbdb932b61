"""BoW vs FastQA dev EM on the synthetic task over several seeds.

Each seed regenerates the data with that seed and trains both models with it.

    python3 scripts/ordering_sweep.py --seeds 0 1 2
"""

import argparse
import tempfile
from pathlib import Path

from fastqa.experiments import train_on_synth


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--bow-epochs", type=int, default=3)
    p.add_argument("--fastqa-epochs", type=int, default=2)
    p.add_argument("--data-root")
    args = p.parse_args()
    root = Path(args.data_root or tempfile.mkdtemp(prefix="synth"))
    print(f"{'seed':>4}  {'BoW EM':>7}  {'FastQA EM':>9}")
    for seed in args.seeds:
        data = root / f"seed{seed}"
        bow = train_on_synth(data, "bow", seed=seed, epochs=args.bow_epochs, data_seed=seed)
        fq = train_on_synth(data, "fastqa", seed=seed, epochs=args.fastqa_epochs, data_seed=seed)
        print(f"{seed:>4}  {bow['dev_em']:>7.1f}  {fq['dev_em']:>9.1f}", flush=True)


if __name__ == "__main__":
    main()
