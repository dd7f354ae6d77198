"""Run configuration: a tree document with sections data, arch, objective, train, eval.

Precedence: built-in defaults < config file < command-line overrides. Every
field is materialized in the resolved echo so a run can be reproduced from it
alone.
"""
from __future__ import annotations

import copy
from typing import Any

import numpy as np

from rfdlc.data import WEIGHT_FORMS, DEFAULT_BETA, WeightForm, importance_weight
from rfdlc.errors import ConfigError
from rfdlc.objective import ObjectiveConfig
from rfdlc.trainer import TrainConfig, default_milestones
from rfdlc.utility import UtilityMatrix, build_one_hot, build_tail_sensitive, parse_utility_spec
from rfdlc.treeio import load_tree

REQUIRED = object()
DATA_SCALE_KEYWORDS = ("n_train", "effective")

# field -> (coercion, default)
SCHEMA: dict[str, dict[str, tuple[Any, Any]]] = {
    "data": {
        "train_csv": (str, None),
        "test_csv": (str, None),
        "synthetic": (dict, None),
        "seed": (int, 0),
    },
    "arch": {
        "hidden": (list, [32]),
        "num_particles": (int, 3),
        "shared_trunk_layers": (int, 0),
    },
    "objective": {
        "utility": (object, REQUIRED),
        "weight_form": (str, "linear"),
        "beta": (float, None),
        "alpha": (float, 1.0),
        "lambda": (float, 5e-4),
        "tau": (float, 40.0),
        "epsilon_var": (float, 1e-8),
        "repulsion": (bool, True),
        "data_scale": (object, 1.0),
    },
    "train": {
        "learning_rate": (float, REQUIRED),
        "epochs": (int, REQUIRED),
        "batch_size": (int, 128),
        "momentum": (float, 0.9),
        "milestones": (list, None),
        "gamma": (float, 0.1),
        "seed": (int, 0),
    },
    "eval": {
        "tail_ratios": (list, [0.25, 0.5, 0.75]),
        "ece_bins": (int, 15),
        "auroc_score": (str, "entropy"),
        "decision_utility": (object, "train"),
    },
}

SYNTHETIC_SCHEMA = {
    "k": (int, REQUIRED),
    "d": (int, REQUIRED),
    "per_class": (int, REQUIRED),
    "test_per_class": (int, 100),
    "separation": (float, REQUIRED),
    "rho": (float, 1.0),
}


def _coerce(path: str, kind, value):
    if value is None:
        return None
    try:
        if kind is bool:
            if isinstance(value, str):
                if value.lower() in ("true", "yes", "1"):
                    return True
                if value.lower() in ("false", "no", "0"):
                    return False
                raise ValueError(value)
            return bool(value)
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind is float:
            return float(value)  # YAML 1.1 reads 5e-4 as a string
        if kind is list:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v]
            if not isinstance(value, (list, tuple)):
                raise ValueError(value)
            return list(value)
        if kind is dict and not isinstance(value, dict):
            raise ValueError(value)
        if kind is str:
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: cannot interpret {value!r} as {kind.__name__}") from None
    return value


def _resolve_section(name: str, schema: dict, given: dict | None) -> dict:
    given = {} if given is None else given
    if not isinstance(given, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = set(given) - set(schema)
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}: unknown field")
    out = {}
    for key, (kind, default) in schema.items():
        path = f"{name}.{key}"
        if key in given:
            out[key] = _coerce(path, kind, given[key])
        elif default is REQUIRED:
            raise ConfigError(f"{path}: missing required field")
        else:
            out[key] = copy.deepcopy(default)
    return out


def set_path(doc: dict, dotted: str, value) -> None:
    """Override ``section.field`` in a raw config document."""
    section, _, key = dotted.partition(".")
    if not key:
        raise ConfigError(f"{dotted}: override must be section.field")
    if key.startswith("synthetic."):
        doc.setdefault(section, {}).setdefault("synthetic", {})[key.split(".", 1)[1]] = value
    else:
        doc.setdefault(section, {})[key] = value


def resolve(doc: dict) -> dict:
    """Validate a raw document and materialize every default."""
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a mapping at top level")
    unknown = set(doc) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown section")
    for required in ("data", "objective", "train"):
        if required not in doc:
            raise ConfigError(f"{required}: missing required section")
    out = {name: _resolve_section(name, schema, doc.get(name)) for name, schema in SCHEMA.items()}
    data = out["data"]
    if data["synthetic"] is not None:
        data["synthetic"] = _resolve_section("data.synthetic", SYNTHETIC_SCHEMA, data["synthetic"])
    elif data["train_csv"] is None:
        raise ConfigError("data.train_csv: missing required field (or give data.synthetic)")
    obj = out["objective"]
    if obj["weight_form"] not in WEIGHT_FORMS:
        raise ConfigError(f"objective.weight_form: must be one of {WEIGHT_FORMS}")
    if obj["weight_form"] == "effective_number" and obj["beta"] is None:
        obj["beta"] = DEFAULT_BETA
    ds = obj["data_scale"]
    if ds not in DATA_SCALE_KEYWORDS:
        obj["data_scale"] = _coerce("objective.data_scale", float, ds)
    obj["utility"] = _utility_doc(obj["utility"])
    out["arch"]["hidden"] = [_coerce("arch.hidden", int, h) for h in out["arch"]["hidden"]]
    out["eval"]["tail_ratios"] = [_coerce("eval.tail_ratios", float, r) for r in out["eval"]["tail_ratios"]]
    if out["train"]["milestones"] is None:
        out["train"]["milestones"] = list(default_milestones(out["train"]["epochs"]))
    out["train"]["milestones"] = [_coerce("train.milestones", int, m) for m in out["train"]["milestones"]]
    return out


def _utility_doc(value) -> dict:
    """Normalize a utility entry to a mapping; strings name a kind or a file."""
    if isinstance(value, dict):
        if "kind" not in value:
            raise ConfigError("objective.utility.kind: missing required field")
        doc = dict(value)
        if doc["kind"] == "tail_sensitive":
            doc["u"] = _coerce("objective.utility.u", float, doc.get("u", -1.0))
        return doc
    if isinstance(value, str):
        name, _, arg = value.partition(":")
        if name == "one_hot":
            return {"kind": "one_hot"}
        if name == "tail_sensitive":
            return {"kind": "tail_sensitive", "u": float(arg) if arg else -1.0}
        doc = load_tree(value)
        if not isinstance(doc, dict):
            raise ConfigError(f"objective.utility: {value} is not a utility document")
        return doc
    raise ConfigError("objective.utility: expected a kind, a mapping or a file path")


def utility_from_doc(doc: dict, k: int) -> UtilityMatrix:
    kind = doc["kind"]
    if kind == "one_hot":
        return build_one_hot(k)
    if kind == "tail_sensitive":
        return build_tail_sensitive(k, float(doc.get("u", -1.0)))
    full = dict(doc)
    full.setdefault("k", k)
    util = UtilityMatrix.from_tree(full)
    if util.num_classes != k:
        raise ConfigError(f"objective.utility: K={util.num_classes} but data has K={k}")
    return util


def decision_utility(resolved: dict, train_utility: UtilityMatrix) -> UtilityMatrix:
    spec = resolved["eval"]["decision_utility"]
    if spec in (None, "train"):
        return train_utility
    if isinstance(spec, dict):
        return utility_from_doc(_utility_doc(spec), train_utility.num_classes)
    return parse_utility_spec(str(spec), train_utility.num_classes)


def data_scale_value(setting, counts, form: WeightForm) -> float:
    """Resolve a data_scale keyword against the training class counts.

    ``n_train`` sums the data term over the training set; ``effective``
    additionally divides by the mean training weight, so every weight form
    carries the same total data weight N.
    """
    counts = np.asarray(counts)
    n = float(counts.sum())
    if setting == "n_train":
        return n
    if setting == "effective":
        present = counts > 0
        mean_w = float((counts[present] * importance_weight(form, counts[present])).sum()) / n
        return n / mean_w
    return float(setting)


def build_train_config(resolved: dict, counts) -> TrainConfig:
    obj = resolved["objective"]
    k = len(counts)
    form = WeightForm(obj["weight_form"], obj["beta"] if obj["weight_form"] == "effective_number" else None)
    scale = data_scale_value(obj["data_scale"], counts, form)
    objective = ObjectiveConfig(
        utility=utility_from_doc(obj["utility"], k), weight_form=form, alpha=obj["alpha"],
        lam=obj["lambda"], tau=obj["tau"], epsilon_var=obj["epsilon_var"],
        repulsion=obj["repulsion"], data_scale=scale,
    )
    tr, arch = resolved["train"], resolved["arch"]
    return TrainConfig(
        objective=objective, hidden=tuple(arch["hidden"]), num_particles=arch["num_particles"],
        shared_trunk_layers=arch["shared_trunk_layers"], learning_rate=tr["learning_rate"],
        epochs=tr["epochs"], batch_size=tr["batch_size"], momentum=tr["momentum"],
        milestones=tuple(tr["milestones"]), gamma=tr["gamma"], seed=tr["seed"],
    )
