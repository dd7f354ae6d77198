"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
Config values come from built-in defaults, then the config file, then
``--set section.field=value`` flags (last wins).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from rfdlc import __version__
from rfdlc import config as cfgmod
from rfdlc import experiment
from rfdlc.data import WeightForm, class_counts, load_csv, save_csv, save_metadata
from rfdlc.decision import decide_batch
from rfdlc.errors import ConfigError, DataError, RfdlcError
from rfdlc.metrics import DEFAULT_TAIL_RATIOS
from rfdlc.model import MlpArchitecture, ParticleEnsemble, init_ensemble
from rfdlc.objective import ObjectiveConfig, gradient_check
from rfdlc.treeio import dump_tree, load_tree, write_csv
from rfdlc.utility import build_tail_sensitive, parse_utility_spec

log = logging.getLogger("rfdlc")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _apply_overrides(doc: dict, pairs) -> dict:
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.field=value, got {pair!r}")
        cfgmod.set_path(doc, key.strip(), yaml.safe_load(value))
    return doc


def _load_doc(path) -> dict:
    if path is None:
        return {}
    try:
        doc = load_tree(Path(path))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not a valid tree document ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return doc


def cmd_make_data(args) -> int:
    doc = _load_doc(args.config)
    params = {"k": 10, "d": 10, "per_class": 500, "test_per_class": 100, "separation": 3.0, "rho": 100.0, "seed": 0}
    params.update(doc.get("synthetic", doc))
    for key in params:
        flag = getattr(args, key, None)
        if flag is not None:
            params[key] = flag
    train_ds, test_ds = experiment.make_synthetic(
        int(params["k"]), int(params["d"]), int(params["per_class"]), float(params["separation"]),
        float(params["rho"]), int(params["seed"]), int(params["test_per_class"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(params["seed"])
    save_csv(train_ds, out / "train.csv", seed=seed)
    save_csv(test_ds, out / "test.csv", seed=seed)
    save_metadata(train_ds, out / "meta.yaml", seed=seed, test_counts=class_counts(test_ds).tolist(),
                  generator=params)
    print(f"train counts: {class_counts(train_ds).tolist()}")
    print(f"wrote {out / 'train.csv'}, {out / 'test.csv'}, {out / 'meta.yaml'}")
    return 0


def cmd_train(args) -> int:
    doc = _apply_overrides(_load_doc(args.config), args.set)
    resolved = cfgmod.resolve(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = resolved["train"]["seed"]
    res = experiment.run(resolved)
    resolved["objective"]["data_scale"] = res.train_config.objective.data_scale
    dump_tree(resolved, out / "resolved_config.yaml", seed=seed)
    res.ensemble.save(out / "checkpoint.yaml")
    res.history.save_csv(out / "history.csv", seed=seed)
    last = res.history.records[-1]
    print(f"epochs={len(res.history)} final loss={last['loss']:.6g} train acc={last['acc']:.4f}")
    print("lr schedule: step decay x{} at epochs {}".format(resolved["train"]["gamma"], resolved["train"]["milestones"]))
    if res.report is not None:
        dump_tree(res.report.to_tree(), out / "report.yaml", seed=seed)
        print(f"test acc={res.report.acc:.4f} fhr_avg={res.report.fhr_avg}")
    return 0


def _parse_rates(items):
    rates = {}
    for item in items or []:
        name, _, sets = item.partition("=")
        true_part, sep, dec_part = sets.partition(":")
        if not sep:
            raise ConfigError(f"--rate expects name=T1,T2:D1,D2, got {item!r}")
        rates[name] = (_ints(true_part), _ints(dec_part))
    return rates


def cmd_eval(args) -> int:
    ens = ParticleEnsemble.load(args.checkpoint)
    test_ds = load_csv(args.test, num_classes=ens.num_classes)
    if int(test_ds.labels.max()) >= ens.num_classes:
        raise ConfigError("test labels exceed the checkpoint's number of classes")
    utility = parse_utility_spec(args.utility, ens.num_classes)
    report = experiment.evaluate_ensemble(ens, test_ds, utility, _floats(args.tail_ratios), args.ece_bins,
                                          args.auroc_score, _parse_rates(args.rate))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_tree(report.to_tree(), out / "report.yaml", seed=ens.seed)
    write_csv(out / "report.csv", report.csv_columns(), [report.csv_row()], seed=ens.seed)
    print(f"acc={report.acc:.4f} head={report.acc_head} med={report.acc_med} tail={report.acc_tail}")
    for r, v in report.fhr_at.items():
        print(f"FHR@{r:g}={v}")
    print(f"ECE={report.ece:.4f} AUROC={report.auroc} (score={report.auroc_score}; regions: {report.region_rule})")
    return 0


def cmd_decide(args) -> int:
    ens = ParticleEnsemble.load(args.checkpoint)
    ds = load_csv(args.input, num_classes=ens.num_classes)
    utility = parse_utility_spec(args.utility, ens.num_classes)
    preds, scores = decide_batch(ens, ds.features, utility, return_scores=True)
    cols = ["index"] + [f"score_{k}" for k in range(ens.num_classes)] + ["decision"]
    rows = ([i, *map(float, s), int(p)] for i, (s, p) in enumerate(zip(scores, preds)))
    write_csv(args.out, cols, rows, seed=ens.seed)
    print(f"wrote {len(preds)} decisions to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    doc = _apply_overrides(_load_doc(args.config), args.set)
    if args.axis not in experiment.SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {args.axis!r}; choose from {sorted(experiment.SWEEP_AXES)}")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if args.axis != "weight_form":
        values = [yaml.safe_load(v) for v in values]
    seeds = _ints(args.seeds) if args.seeds else None
    columns, rows = experiment.sweep(doc, args.axis, values, seeds)
    seed = seeds[0] if seeds else int((doc.get("train") or {}).get("seed", 0))
    write_csv(args.out, columns, rows, seed=seed)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def gradcheck_instance(seed: int, doc: dict | None = None):
    """A random small problem: K=3, D=4, one hidden layer of 5, 3 particles (43 parameters each)."""
    doc = doc or {}
    rng = np.random.default_rng(seed)
    arch_doc = cfgmod._resolve_section("arch", cfgmod.SCHEMA["arch"], doc.get("arch"))
    obj_doc = dict(doc.get("objective") or {})
    obj_doc.setdefault("utility", "tail_sensitive:-1")
    obj = cfgmod._resolve_section("objective", cfgmod.SCHEMA["objective"], obj_doc)
    k, d = 3, 4
    hidden = arch_doc["hidden"] if doc.get("arch", {}).get("hidden") else [5]
    arch = MlpArchitecture((d, *[int(h) for h in hidden], k), arch_doc["shared_trunk_layers"])
    ens = init_ensemble(arch, arch_doc["num_particles"], seed)
    ens.heads += rng.normal(scale=0.3, size=ens.heads.shape)
    x = rng.normal(size=(8, d))
    y = rng.integers(0, k, size=8)
    counts = np.array([20, 7, 2])
    form_name = obj["weight_form"]
    form = WeightForm(form_name, obj["beta"] if form_name == "effective_number" else None)
    scale = obj["data_scale"] if obj["data_scale"] not in cfgmod.DATA_SCALE_KEYWORDS else 1.0
    cfg = ObjectiveConfig(cfgmod.utility_from_doc(cfgmod._utility_doc(obj["utility"]), k), form,
                          alpha=float(obj["alpha"]), lam=float(obj["lambda"]), tau=float(obj["tau"]),
                          epsilon_var=float(obj["epsilon_var"]), repulsion=bool(obj["repulsion"]),
                          data_scale=float(scale))
    return ens, (x, y), counts, cfg


def cmd_gradcheck(args) -> int:
    doc = _load_doc(args.config)
    ens, batch, counts, cfg = gradcheck_instance(args.seed, doc)
    result = gradient_check(ens, batch, counts, cfg, epoch=args.epoch, step=args.step, tol=args.tol,
                            corrupt=args.corrupt)
    block, idx = result.worst
    where = f"trunk parameter {idx[0]}" if block == "trunk" else f"particle {idx[0]}, parameter {idx[1]}"
    print(f"parameters per particle: {ens.arch.particle_size}, particles: {ens.num_particles}")
    print(f"max relative error: {result.max_rel_error:.3e} (tolerance {result.tol:g})")
    print(f"worst coordinate: {where} [{block} {list(idx)}] analytic={result.analytic:.10g} "
          f"numeric={result.numeric:.10g}")
    print("PASS" if result.passed else "FAIL")
    return 0 if result.passed else 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfdlc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rfdlc {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("make-data", help="generate a long-tailed synthetic train/test split")
    s.add_argument("--config")
    s.add_argument("--k", type=int)
    s.add_argument("--d", type=int)
    s.add_argument("--per-class", dest="per_class", type=int)
    s.add_argument("--test-per-class", dest="test_per_class", type=int)
    s.add_argument("--separation", type=float)
    s.add_argument("--rho", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_make_data)

    s = sub.add_parser("train", help="train a particle ensemble from a config file")
    s.add_argument("config")
    s.add_argument("--out", required=True)
    s.add_argument("--set", action="append", metavar="SECTION.FIELD=VALUE")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="decide on a test set and write an evaluation report")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--utility", default="one_hot", help="one_hot, tail_sensitive[:u] or a utility file")
    s.add_argument("--tail-ratios", default=",".join(str(r) for r in DEFAULT_TAIL_RATIOS))
    s.add_argument("--ece-bins", type=int, default=15)
    s.add_argument("--auroc-score", choices=("entropy", "max_prob"), default="entropy")
    s.add_argument("--rate", action="append", metavar="NAME=T1,T2:D1,D2",
                   help="extra misprediction rate: labels in T predicted in D")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("decide", help="write per-class decision scores and decisions")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--utility", default="one_hot")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_decide)

    s = sub.add_parser("sweep", help="train/evaluate over one parameter axis")
    s.add_argument("config")
    s.add_argument("--axis", required=True, help=", ".join(sorted(experiment.SWEEP_AXES)))
    s.add_argument("--values", required=True)
    s.add_argument("--seeds")
    s.add_argument("--set", action="append", metavar="SECTION.FIELD=VALUE")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epoch", type=float, default=1.0)
    s.add_argument("--step", type=float, default=1e-6)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--corrupt", type=float, default=0.0, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except RfdlcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
