"""Entropy (repulsive) term on versus off: particle spread and calibration."""
from _bench import emit, load_base, parser

from rfdlc.experiment import sweep

import copy


def main():
    args = parser("repulsion on/off", "repulsion.csv").parse_args()
    base, seeds = load_base(args)
    columns, rows = None, []
    for flag in (True, False):
        doc = copy.deepcopy(base)
        doc["objective"]["repulsion"] = flag
        cols, part = sweep(doc, "lambda", [doc["objective"].get("lambda", 5e-4)], seeds)
        columns = ["repulsion", *cols]
        rows += [[flag, *r] for r in part]
    emit(columns, rows, args.out, key="repulsion")


if __name__ == "__main__":
    main()
