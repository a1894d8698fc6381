"""Flat ``key = value`` experiment configs with dotted keys.

Lines starting with ``#`` (and trailing ``# ...``) are comments.  Lists are
comma separated; an integer range may be written ``a..b`` (inclusive).
Every value is validated against the schema below and errors name the key.
"""
from __future__ import annotations

import difflib
import math
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from . import process as pr
from . import schedule as sc
from . import space as sp

EXPERIMENTS = ("dichotomy", "dimension", "hitting", "pz", "density", "mixing", "shepp", "ahlfors")
DEFAULT_SEED = 20200101
# how to run, not what to run: kept out of report echoes so reports stay byte-stable
EXECUTION_KEYS = ("parallelism", "output")


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass(frozen=True)
class Field:
    kind: str  # int, float, str, ints, floats
    default: Any
    check: Callable[[Any], bool] | None = None
    rule: str = ""
    choices: tuple = ()


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _prob(x):
    return 0 <= x <= 1


def _all(pred):
    return lambda xs: all(pred(x) for x in xs)


SCHEMA: dict[str, Field] = {
    "experiment": Field("str", "dichotomy", choices=EXPERIMENTS),
    "master_seed": Field("int", DEFAULT_SEED, lambda x: 0 <= x < 2**64, "a 64-bit unsigned integer"),
    "trials": Field("int", 20, _pos, "positive"),
    "probes": Field("int", 10**4, _pos, "positive"),
    "parallelism": Field("int", 1, _pos, "positive"),
    "output": Field("str", ""),
    "space.kind": Field("str", sp.CIRCLE, choices=sp.KINDS),
    "space.beta": Field("float", sp.GOLDEN, lambda x: x > 1, "greater than 1"),
    "space.cantor_depth": Field("int", 40, lambda x: 1 <= x <= 60, "in 1..60"),
    "process.kind": Field("str", pr.IID, choices=pr.KINDS),
    "process.beta": Field("float", sp.GOLDEN, lambda x: x > 1, "greater than 1"),
    "process.markov.bins": Field("int", 8, lambda x: x >= 2, "at least 2"),
    "process.markov.eps": Field("float", 0.2, lambda x: 0 < x <= 1, "in (0, 1]"),
    "radii.kind": Field("str", sc.POWER, choices=(sc.POWER, sc.POWER_LOG, sc.EXPLICIT)),
    "radii.a": Field("float", 0.1, _pos, "positive"),
    "radii.alpha": Field("float", 0.9, _pos, "positive"),
    "radii.b": Field("float", 0.0, _nonneg, "nonnegative"),
    "radii.file": Field("str", ""),
    # dimfn.kind = none leaves the schedule as is; otherwise dichotomy runs inflate it
    "dimfn.kind": Field("str", "none", choices=("none", sc.POWER, sc.POWER_LOG)),
    "dimfn.t": Field("float", 0.5, _pos, "positive"),
    "dimfn.b": Field("float", 0.0, _nonneg, "nonnegative"),
    "ladder": Field("ints", list(range(10, 20)), _all(_nonneg), "nonnegative exponents"),
    "window.K": Field("int", 10**4, _pos, "positive"),
    "window.N": Field("int", 10**6, _pos, "positive"),
    "target": Field("float", 1.0 / 3.0, lambda x: 0 <= x < 1, "in [0, 1)"),
    "pz.N": Field("int", 10**4, _pos, "positive"),
    "pz.lambda": Field("floats", [0.25, 0.5, 0.75], _all(lambda x: 0 < x < 1), "in (0, 1)"),
    "density.K": Field("ints", [10**3, 10**4, 10**5], _all(_pos), "positive"),
    "density.budget": Field("int", 10**6, _pos, "positive"),
    "mesh.count": Field("int", 64, _pos, "positive"),
    "mesh.radius": Field("float", 1.0 / 64, _pos, "positive"),
    "mixing.lags": Field("ints", list(range(1, 13)), _all(_pos), "positive"),
    "mixing.horizon": Field("int", 64, lambda x: x >= 2, "at least 2"),
    "mixing.level": Field("int", 3, lambda x: 1 <= x <= 8, "in 1..8"),
    "shepp.N": Field("int", 10**6, lambda x: x >= 10, "at least 10"),
    "ahlfors.centers": Field("int", 1000, lambda x: x >= 10, "at least 10"),
    "dimension.tgrid": Field("floats", [round(0.1 * k, 1) for k in range(1, 11)], _all(_pos),
                             "positive"),
    "dimension.K": Field("int", 2**15, _pos, "positive"),
    "dimension.N": Field("int", 2**20, _pos, "positive"),
    "dimension.probes": Field("int", 2000, _pos, "positive"),
    "dimension.trials": Field("int", 4, _pos, "positive"),
    "box.K": Field("int", 2**10, _pos, "positive"),
    "box.N": Field("int", 2**20, _pos, "positive"),
    "box.probes": Field("int", 2**18, _pos, "positive"),
    "box.a": Field("float", 0.1, _pos, "positive"),
    "box.alpha": Field("float", 0.9, _pos, "positive"),
    "threshold.full": Field("float", 0.95, _prob, "in [0, 1]"),
    "threshold.zero": Field("float", 0.05, _prob, "in [0, 1]"),
    "threshold.hit": Field("float", 0.95, _prob, "in [0, 1]"),
    "threshold.miss": Field("float", 0.05, _prob, "in [0, 1]"),
    "threshold.density": Field("float", 0.99, _prob, "in [0, 1]"),
    "threshold.box_tol": Field("float", 0.05, _pos, "positive"),
    "threshold.r2": Field("float", 0.99, _prob, "in [0, 1]"),
    "threshold.ahlfors_s": Field("float", 0.03, _pos, "positive"),
    "threshold.gamma": Field("float", 0.6, lambda x: 0 < x < 1, "in (0, 1)"),
    "threshold.sigma": Field("float", 3.0, _pos, "positive"),
    "threshold.shepp_ratio": Field("float", 10.0, _pos, "positive"),
    "threshold.shepp_tail": Field("float", 1e-3, _pos, "positive"),
}

# per-experiment defaults layered over SCHEMA defaults
EXPERIMENT_DEFAULTS: dict[str, dict[str, Any]] = {
    "dichotomy": {"trials": 20},
    "dimension": {"trials": 1, "radii.a": 1.0, "radii.alpha": 2.0},
    "hitting": {"trials": 500, "space.kind": sp.INTERVAL, "process.kind": pr.DOUBLING,
                "radii.a": 0.5, "radii.alpha": 1.0, "ladder": list(range(8, 17)),
                "window.K": 10**3},
    "pz": {"trials": 500, "radii.a": 0.5, "radii.alpha": 1.0, "target": 0.3},
    "density": {"trials": 100},
    "mixing": {"trials": 20000, "process.kind": pr.DOUBLING},
    "shepp": {"trials": 1, "radii.a": 1.0, "radii.alpha": 1.0},
    "ahlfors": {"trials": 1},
}


class ExperimentConfig(Mapping):
    """Validated config: every schema key present, read with ``cfg["radii.alpha"]``."""

    def __init__(self, values: Mapping[str, Any]):
        self._v = dict(values)

    def __getitem__(self, key):
        return self._v[key]

    def __iter__(self):
        return iter(sorted(self._v))

    def __len__(self):
        return len(self._v)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self._v == other._v

    def __repr__(self):
        return f"ExperimentConfig(experiment={self.experiment!r})"

    @property
    def experiment(self) -> str:
        return self._v["experiment"]

    def replace(self, **updates) -> "ExperimentConfig":
        raw = {k: _format_value(v) for k, v in self._v.items()}
        raw.update({k.replace("__", "."): _format_value(v) for k, v in updates.items()})
        return build_config(raw)

    def echo(self) -> dict:
        return {k: self._v[k] for k in sorted(self._v)}


def _suggest(key: str) -> str:
    close = difflib.get_close_matches(key, SCHEMA, n=1, cutoff=0.6)
    return f"; did you mean {close[0]!r}?" if close else ""


def _parse_int(key, text):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        f = float(text)
    except ValueError:
        f = math.nan
    if not (math.isfinite(f) and f.is_integer()):
        raise ConfigError(key, f"expected an integer, got {text!r}")
    return int(f)


def _parse_float(key, text):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(key, f"expected a decimal number, got {text!r}") from None
    if not math.isfinite(v):
        raise ConfigError(key, f"expected a finite number, got {text!r}")
    return v


def _parse_value(key: str, f: Field, text: str):
    text = text.strip()
    if f.kind == "str":
        if f.choices and text not in f.choices:
            raise ConfigError(key, f"expected one of {', '.join(f.choices)}, got {text!r}")
        return text
    if f.kind == "int":
        return _parse_int(key, text)
    if f.kind == "float":
        return _parse_float(key, text)
    items = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        if f.kind == "ints" and ".." in part:
            a, b = part.split("..", 1)
            items.extend(range(_parse_int(key, a), _parse_int(key, b) + 1))
        elif f.kind == "ints":
            items.append(_parse_int(key, part))
        else:
            items.append(_parse_float(key, part))
    if not items:
        raise ConfigError(key, "expected a non-empty list")
    return items


def _format_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def build_config(raw: Mapping[str, str]) -> ExperimentConfig:
    for key in raw:
        if key not in SCHEMA:
            raise ConfigError(key, f"unknown key{_suggest(key)}")
    exp = raw.get("experiment", SCHEMA["experiment"].default)
    exp = _parse_value("experiment", SCHEMA["experiment"], exp)
    values = {}
    for key, f in SCHEMA.items():
        if key in raw:
            v = _parse_value(key, f, raw[key])
        else:
            v = EXPERIMENT_DEFAULTS.get(exp, {}).get(key, f.default)
        if f.check is not None and not f.check(v):
            raise ConfigError(key, f"must be {f.rule}, got {_format_value(v)}")
        values[key] = v
    values["experiment"] = exp
    _cross_checks(values)
    return ExperimentConfig(values)


def _cross_checks(v: dict) -> None:
    if v["window.N"] < v["window.K"]:
        raise ConfigError("window.N", "must be at least window.K")
    if v["box.N"] < v["box.K"]:
        raise ConfigError("box.N", "must be at least box.K")
    if v["dimension.N"] < v["dimension.K"]:
        raise ConfigError("dimension.N", "must be at least dimension.K")
    if v["radii.kind"] == sc.EXPLICIT and not v["radii.file"]:
        raise ConfigError("radii.file", "required when radii.kind = explicit")
    lad = v["ladder"]
    if any(b <= a for a, b in zip(lad, lad[1:])):
        raise ConfigError("ladder", "window exponents must be strictly increasing")
    if max(v["mixing.lags"]) >= v["mixing.horizon"]:
        raise ConfigError("mixing.lags", "every lag must be below mixing.horizon")
    if any(k > v["density.budget"] for k in v["density.K"]):
        raise ConfigError("density.K", "must not exceed density.budget")


def read_pairs(text: str) -> dict[str, str]:
    """Raw ``key -> value text`` pairs, before validation."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in raw:
            raise ConfigError(key, "duplicate key")
        raw[key] = value
    return raw


def parse_config(text: str) -> ExperimentConfig:
    return build_config(read_pairs(text))


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(cfg: Mapping[str, Any]) -> str:
    return "".join(f"{k} = {_format_value(cfg[k])}\n" for k in sorted(cfg))


# --------------------------------------------------------------------------
# object builders


def _wrap(key: str, build):
    try:
        return build()
    except ConfigError:
        raise
    except (ValueError, TypeError, OSError) as exc:
        raise ConfigError(key, str(exc)) from None


def space_from(cfg) -> sp.SpaceSpec:
    return _wrap("space.kind", lambda: sp.make_space(cfg["space.kind"], cfg["space.beta"],
                                                      cfg["space.cantor_depth"]))


def process_from(cfg) -> pr.ProcessSpec:
    space = space_from(cfg)
    kind = cfg["process.kind"]

    def build():
        if kind == pr.BETA:
            return pr.ProcessSpec(pr.BETA, space, beta=cfg["process.beta"])
        if kind == pr.MARKOV:
            return pr.markov(space, bins=cfg["process.markov.bins"], eps=cfg["process.markov.eps"])
        return pr.ProcessSpec(kind, space)
    return _wrap("process.kind", build)


def schedule_from(cfg, base_dir: Path | None = None) -> sc.RadiusSchedule:
    kind = cfg["radii.kind"]
    if kind == sc.POWER:
        return sc.power(cfg["radii.a"], cfg["radii.alpha"])
    if kind == sc.POWER_LOG:
        return sc.power_log(cfg["radii.a"], cfg["radii.alpha"], cfg["radii.b"])
    path = Path(cfg["radii.file"])
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    return _wrap("radii.file", lambda: sc.read_radii_file(path))


def dimfn_from(cfg) -> sc.DimensionFunction | None:
    if cfg["dimfn.kind"] == "none":
        return None
    if cfg["dimfn.kind"] == sc.POWER:
        return sc.dimfn_power(cfg["dimfn.t"])
    return sc.dimfn_power_log(cfg["dimfn.t"], cfg["dimfn.b"])
