"""CSV datasets, run configuration files and JSON result artefacts.

Dataset CSV: a header row, one column per feature (named as in the model),
``avail_<alternative>`` columns holding 0/1, and a ``choice`` column holding
an alternative name.  Extra columns are ignored.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .core import ChoiceDataset, ModelSpec, StructuralError
from .optimizer import Estimator, FitConfig, FitResult

__all__ = [
    "DataValidationError",
    "ConfigError",
    "read_dataset",
    "write_dataset",
    "RunConfig",
    "load_config",
    "dumps",
    "write_json",
    "beta_to_json",
    "read_beta",
    "fit_result_to_json",
    "default_seed",
]

SEED_ENV = "ROBUSTLOGIT_SEED"


class DataValidationError(ValueError):
    """A dataset file does not match the model."""


class ConfigError(ValueError):
    """A configuration file is malformed or has unknown keys."""


# ------------------------------------------------------------------ datasets


def read_dataset(path, spec: ModelSpec) -> ChoiceDataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        col = {name: i for i, name in enumerate(header)}
        needed = list(spec.features) + [f"avail_{a}" for a in spec.alternatives] + ["choice"]
        missing = [c for c in needed if c not in col]
        if missing:
            raise DataValidationError(f"{path}: missing columns {missing}")
        alt_index = {a: i for i, a in enumerate(spec.alternatives)}
        X, A, Y = [], [], []
        for r, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise DataValidationError(f"{path}: row {r}: expected {len(header)} fields, got {len(row)}")
            x = []
            for f in spec.features:
                cell = row[col[f]].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataValidationError(f"{path}: row {r}, column {f!r}: not a number: {cell!r}") from None
                if not math.isfinite(v):
                    raise DataValidationError(f"{path}: row {r}, column {f!r}: non-finite value")
                x.append(v)
            av = []
            for a in spec.alternatives:
                c = f"avail_{a}"
                cell = row[col[c]].strip()
                if cell not in ("0", "1"):
                    raise DataValidationError(f"{path}: row {r}, column {c!r}: expected 0 or 1, got {cell!r}")
                av.append(cell == "1")
            ch = row[col["choice"]].strip()
            if ch not in alt_index:
                raise DataValidationError(f"{path}: row {r}, column 'choice': unknown alternative {ch!r}")
            if not av[alt_index[ch]]:
                raise DataValidationError(f"{path}: row {r}, column 'avail_{ch}': chosen alternative is unavailable")
            if sum(av) < 2:
                raise DataValidationError(f"{path}: row {r}: fewer than two available alternatives")
            X.append(x)
            A.append(av)
            Y.append(alt_index[ch])
    if not Y:
        return ChoiceDataset(np.zeros((0, spec.n_features)), np.zeros((0, spec.n_alternatives), bool), [], spec.features)
    return ChoiceDataset(np.array(X), np.array(A), np.array(Y), spec.features)


def _num(v: float) -> str:
    return format(float(v), ".17g")


def write_dataset(path, data: ChoiceDataset, spec: ModelSpec) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(spec.features) + [f"avail_{a}" for a in spec.alternatives] + ["choice"])
        for n in range(data.n_obs):
            w.writerow(
                [_num(v) for v in data.X[n]]
                + [int(b) for b in data.avail[n]]
                + [spec.alternatives[data.choice[n]]]
            )


# ------------------------------------------------------------------- configs


def default_seed() -> int:
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _order(v) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid norm order {v!r}") from None


SECTIONS = {
    "model": {"alternatives", "base", "features"},
    "estimator": {"kind", "p", "rho", "constraints", "gamma"},
    "fit": {"max_iters", "grad_tol", "obj_rel_tol", "subgrad_c", "subgrad_steps", "memory"},
    "experiment": {
        "scheme", "R", "seed", "feature_magnitude", "label_flip_prob",
        "time_features", "green_modes", "exempt_features", "models",
    },
    "tune": {"grid", "validation_fraction", "seed"},
    "pricing": {"feature", "alternative", "step", "upper"},
    "diagnose": {"perturbation_l2", "lipschitz", "baseline_error", "subsample"},
}
ESTIMATOR_KEYS = SECTIONS["estimator"]


def _check_keys(where: str, got: dict, allowed: set):
    if not isinstance(got, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    extra = sorted(set(got) - allowed)
    if extra:
        raise ConfigError(f"unknown keys in {where!r}: {extra}")


def parse_estimator(d: dict, where: str = "estimator") -> Estimator:
    _check_keys(where, d, ESTIMATOR_KEYS)
    cons = tuple((_order(p), float(r)) for p, r in d.get("constraints", ()) or ())
    rho = d.get("rho", 0.0)
    try:
        return Estimator(
            kind=str(d.get("kind", "nominal")),
            rho=tuple(float(v) for v in rho) if isinstance(rho, list) else float(rho),
            p=_order(d.get("p", 2.0)),
            gamma=float(d.get("gamma", 0.0)),
            constraints=cons,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class RunConfig:
    """Parsed configuration; every section is optional except ``model``.

    Defaults: estimator nominal (p=2, rho=0, gamma=0); fit as
    :class:`FitConfig`; experiment scheme ``independent`` with R=30,
    magnitude 0.3, flip probability 0.1 and the default seed; tune grid
    required, validation fraction 0.2; pricing step 0.01 up to 10;
    diagnose perturbation 0, L=1, baseline 0, subsample 20.
    """

    spec: ModelSpec
    estimator: Estimator = field(default_factory=Estimator)
    fit: FitConfig = field(default_factory=FitConfig)
    experiment: dict = field(default_factory=dict)
    tune: dict = field(default_factory=dict)
    pricing: dict = field(default_factory=dict)
    diagnose: dict = field(default_factory=dict)

    def feature_index(self, name) -> int:
        try:
            return self.spec.features.index(name)
        except ValueError:
            raise ConfigError(f"unknown feature {name!r}") from None

    def alternative_index(self, name) -> int:
        try:
            return self.spec.alternatives.index(name)
        except ValueError:
            raise ConfigError(f"unknown alternative {name!r}") from None

    def models(self) -> list:
        raw = self.experiment.get("models")
        if raw is None:
            return [self.estimator]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("experiment.models must be a non-empty list")
        return [parse_estimator(m, f"experiment.models[{i}]") for i, m in enumerate(raw)]


def parse_config(raw: Any) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    _check_keys("<top level>", raw, set(SECTIONS))
    for name, allowed in SECTIONS.items():
        if name in raw:
            _check_keys(name, raw[name], allowed)
    if "model" not in raw:
        raise ConfigError("missing section 'model'")
    m = raw["model"]
    for key in ("alternatives", "features"):
        if key not in m:
            raise ConfigError(f"model.{key} is required")
    feats = m["features"]
    if not isinstance(feats, dict):
        raise ConfigError("model.features must map each feature to the alternatives it enters")
    try:
        spec = ModelSpec.from_lists(
            [str(a) for a in m["alternatives"]],
            [str(f) for f in feats],
            {str(f): [str(a) for a in (alts or [])] for f, alts in feats.items()},
            base=str(m.get("base", m["alternatives"][0])),
        )
    except (StructuralError, KeyError) as exc:
        raise ConfigError(f"model: {exc}") from None
    est = parse_estimator(raw.get("estimator", {}))
    try:
        fit = FitConfig(**raw.get("fit", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"fit: {exc}") from None
    return RunConfig(
        spec=spec,
        estimator=est,
        fit=fit,
        experiment=dict(raw.get("experiment", {})),
        tune=dict(raw.get("tune", {})),
        pricing=dict(raw.get("pricing", {})),
        diagnose=dict(raw.get("diagnose", {})),
    )


def load_config(path) -> RunConfig:
    """Read a YAML or JSON configuration file (JSON is valid YAML)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw)


# ---------------------------------------------------------------------- JSON


def _emit(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return format(v, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _emit(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_emit(obj[k], indent, level + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, bool, np.number)) or v is None for v in obj):
            return "[" + ", ".join(_emit(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _emit(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON with sorted keys and reals written to 17 significant digits."""
    return _emit(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def beta_to_json(spec: ModelSpec, beta) -> dict:
    return {
        "alternatives": list(spec.alternatives),
        "features": list(spec.features),
        "base": spec.alternatives[spec.base],
        "mask": spec.mask.astype(int).tolist(),
        "beta": np.asarray(beta, dtype=float).tolist(),
    }


def read_beta(path, spec: ModelSpec | None = None) -> tuple[ModelSpec, np.ndarray]:
    """Coefficients from a JSON artefact written by :func:`beta_to_json`.

    When ``spec`` is given the stored names and mask must agree with it.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        stored = ModelSpec(
            tuple(raw["alternatives"]),
            tuple(raw["features"]),
            np.array(raw["mask"], dtype=bool),
            list(raw["alternatives"]).index(raw.get("base", raw["alternatives"][0])),
        )
        beta = np.array(raw["beta"], dtype=float)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed coefficient file ({exc})") from None
    beta = stored.check_beta(beta)
    if np.any(beta[~stored.mask] != 0):
        raise ConfigError(f"{path}: coefficients outside the mask must be zero")
    if spec is not None:
        if stored.alternatives != spec.alternatives or stored.features != spec.features:
            raise ConfigError(f"{path}: alternatives/features differ from the model configuration")
        if not np.array_equal(stored.mask, spec.mask):
            raise ConfigError(f"{path}: mask differs from the model configuration")
    return (spec or stored), beta


def fit_result_to_json(spec: ModelSpec, res: FitResult, estimator: Estimator, extra: dict | None = None) -> dict:
    out = beta_to_json(spec, res.beta)
    out.update(
        {
            "estimator": estimator.label,
            "objective": res.objective,
            "iterations": res.iterations,
            "converged": res.converged,
            "status": res.status,
            "objective_trace": list(res.objective_trace),
        }
    )
    if extra:
        out.update(extra)
    return out
