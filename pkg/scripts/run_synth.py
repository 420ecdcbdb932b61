"""Train one model on the synthetic task and print dev EM per checkpoint.

    python3 scripts/run_synth.py --model fastqa --epochs 2
    python3 scripts/run_synth.py --model fastqa --no-wiq --epochs 2
"""

import argparse
import json
import tempfile
import time
from pathlib import Path

from fastqa.experiments import SYNTH_PRESETS, train_on_synth


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--model", default="fastqa", choices=sorted(SYNTH_PRESETS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--no-wiq", action="store_true")
    p.add_argument("--data")
    args = p.parse_args()
    data = args.data or tempfile.mkdtemp(prefix="synth")
    t0 = time.perf_counter()
    res = train_on_synth(Path(data), args.model, seed=args.seed, epochs=args.epochs,
                         wiq=not args.no_wiq, data_seed=args.data_seed)
    for rec in res["history"]:
        if "dev_em" in rec:
            print(json.dumps({k: round(v, 3) for k, v in rec.items()}))
    print(json.dumps({"model": args.model, "wiq": not args.no_wiq, "dev_em": res["dev_em"],
                      "dev_f1": res["dev_f1"], "seconds": round(time.perf_counter() - t0, 1)}))


if __name__ == "__main__":
    main()
