"""Sweep one axis of the benchmark over seeds and print seed means.

Examples:
    python3 scripts/sweep_axis.py weight_form
    python3 scripts/sweep_axis.py utility_u
    python3 scripts/sweep_axis.py lambda
    python3 scripts/sweep_axis.py num_particles
"""
from _bench import emit, load_base, parser

from rfdlc.experiment import sweep

GRIDS = {
    "weight_form": ["linear", "effective_number", "sqrt", "log", "constant"],
    "utility_u": [round(-0.1 * i, 1) for i in range(11)],
    "lambda": [0.0, 5e-6, 5e-5, 5e-4, 5e-3, 5e-2],
    "num_particles": list(range(1, 9)),
}


def main():
    p = parser("sweep one benchmark axis", "sweep.csv")
    p.add_argument("axis", choices=sorted(GRIDS))
    p.add_argument("--values", help="comma-separated override of the default grid")
    args = p.parse_args()
    base, seeds = load_base(args)
    values = GRIDS[args.axis]
    if args.values:
        cast = str if args.axis == "weight_form" else float
        values = [cast(v) for v in args.values.split(",")]
        if args.axis == "num_particles":
            values = [int(v) for v in values]
    if args.out.endswith("sweep.csv"):
        args.out = args.out.replace("sweep.csv", f"sweep_{args.axis}.csv")
    columns, rows = sweep(base, args.axis, values, seeds)
    emit(columns, rows, args.out)


if __name__ == "__main__":
    main()
