"""One-hot versus tail-sensitive training on the benchmark, under both decision rules.

Each training utility is evaluated twice: deciding with the training matrix
and deciding with the one-hot matrix. The transposed tail-sensitive matrix
(penalizing head decisions on tail-labelled samples) is included as a
diagnostic row.
"""
import copy

import numpy as np
from _bench import emit, load_base, parser

from rfdlc import config as cfgmod
from rfdlc.experiment import evaluate_ensemble, min_pairwise_distance, prepare_data, run
from rfdlc.utility import build_one_hot, build_tail_sensitive


def utilities(k, u):
    transposed = build_tail_sensitive(k, u).values.T
    return {
        "one_hot": {"kind": "one_hot"},
        f"tail_sensitive:{u:g}": {"kind": "tail_sensitive", "u": u},
        f"transposed:{u:g}": {"kind": "raw", "k": k, "values": [float(v) for v in transposed.ravel()]},
    }


def main():
    p = parser("compare training utilities", "compare_utilities.csv")
    p.add_argument("--u", type=float, default=-1.0)
    args = p.parse_args()
    base, seeds = load_base(args)
    k = base["data"]["synthetic"]["k"]
    columns, rows = None, []
    for name, udoc in utilities(k, args.u).items():
        for seed in seeds:
            doc = copy.deepcopy(base)
            doc["objective"]["utility"] = udoc
            doc["data"]["seed"] = doc["train"]["seed"] = seed
            resolved = cfgmod.resolve(doc)
            data = prepare_data(resolved)
            res = run(resolved, data)
            train_u = res.train_config.objective.utility
            for rule, util in (("train", train_u), ("one_hot", build_one_hot(k))):
                rep = evaluate_ensemble(res.ensemble, data[1], util)
                if columns is None:
                    columns = ["value", "decision", "seed", *rep.csv_columns(), "min_particle_distance"]
                rows.append([f"{name}|decide={rule}", rule, seed, *rep.csv_row(), min_pairwise_distance(res.ensemble)])
            print(f"{name} seed {seed}: done", flush=True)
    emit(columns, rows, args.out)


if __name__ == "__main__":
    main()
