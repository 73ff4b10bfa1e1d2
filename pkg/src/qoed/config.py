"""Experiment configuration: an INI file plus command-line overrides.

Grammar (every section and key optional; see docs/config.md)::

    [model]
    name = nuisance_coupled        ; linear_gaussian_1d | push_2d | nuisance_coupled
    sigma = 0.01                   ; scalar or comma list, one per state dim
    lower = 0.5, 0.5, -4, -4
    upper = 2, 2, 4, 4

    [experiment]
    methods = qoed, agnostic, boed
    seeds = 0-24                   ; ranges and comma lists, e.g. 0-4, 10, 12
    prior_width = 0.25

    [thresholds]
    delta_eig = 0.1
    alpha_eig = 0.01
    delta_cos = 0.95
    eps =                          ; empty -> scale-aware default
    budget =

    [cem]            ; CemConfig fields
    [exploration]    ; ExplorationConfig fields
    [sweep]          ; delta_eig / alpha_eig / delta_cos as start:stop:step, seeds
    [output]
    dir = out
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .design import ExplorationConfig
from .errors import QoedError
from .estimation import CemConfig
from .models import MODELS, DynamicsModel, make_model
from .objectives import KINDS, Thresholds

__all__ = ["ExperimentConfig", "SweepGrid", "load_config", "parse_seeds", "parse_range"]


def parse_seeds(text: str) -> tuple:
    """``"0-3, 7"`` -> ``(0, 1, 2, 3, 7)``."""
    seeds = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        try:
            if "-" in part[1:]:
                a, b = (int(x) for x in part.split("-", 1))
                if b < a:
                    raise ValueError
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
        except (TypeError, ValueError):
            raise QoedError("bad-config", f"bad seed list {text!r}") from None
    if not seeds:
        raise QoedError("bad-config", "at least one seed is required")
    if min(seeds) < 0:
        raise QoedError("bad-config", "seeds must be non-negative")
    return tuple(seeds)


def parse_range(text: str) -> tuple:
    """``"start:stop:step"`` (stop inclusive) or a comma list -> values."""
    text = str(text).strip()
    try:
        if ":" in text:
            a, b, h = (float(x) for x in text.split(":"))
            if h <= 0 or b < a:
                raise ValueError
            n = int(np.floor((b - a) / h + 1e-9)) + 1
            return tuple(round(a + i * h, 12) for i in range(n))
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise QoedError("bad-config", f"bad range {text!r}") from None
    if not vals:
        raise QoedError("bad-config", f"empty range {text!r}")
    return vals


@dataclass(frozen=True)
class SweepGrid:
    """Robustness grid; defaults cover the published ranges."""

    delta_eig: tuple = parse_range("0.05:0.5:0.05")
    alpha_eig: tuple = parse_range("0.005:0.05:0.005")
    delta_cos: tuple = parse_range("0.9:0.99:0.01")
    methods: tuple = ("qoed", "agnostic")
    seeds: tuple | None = None      # None -> the experiment seeds

    def cells(self):
        for d in self.delta_eig:
            for a in self.alpha_eig:
                for c in self.delta_cos:
                    yield d, a, c

    @property
    def size(self) -> int:
        return len(self.delta_eig) * len(self.alpha_eig) * len(self.delta_cos)


@dataclass(frozen=True)
class ExperimentConfig:
    model_name: str = "nuisance_coupled"
    model_params: dict = field(default_factory=dict)
    methods: tuple = KINDS
    seeds: tuple = tuple(range(25))
    prior_width: float = 0.25
    thresholds: Thresholds = Thresholds()
    cem: CemConfig = CemConfig()
    exploration: ExplorationConfig = ExplorationConfig()
    sweep: SweepGrid = SweepGrid()
    out_dir: str = "out"

    def __post_init__(self):
        if self.model_name not in MODELS:
            raise QoedError("bad-config", f"unknown model {self.model_name!r}")
        if not self.seeds:
            raise QoedError("bad-config", "at least one seed is required")
        bad = [m for m in self.methods if m not in KINDS]
        if bad or not self.methods:
            raise QoedError("bad-config", f"methods must be drawn from {KINDS}")
        t = self.thresholds
        if not (t.delta_eig > 0 and t.alpha_eig > 0 and t.delta_cos > 0
                and (t.eps is None or t.eps > 0)):
            raise QoedError("bad-config", "thresholds must be positive")
        if not self.prior_width > 0:
            raise QoedError("bad-config", "prior_width must be positive")

    def make_model(self) -> DynamicsModel:
        try:
            return make_model(self.model_name, **self.model_params)
        except QoedError:
            raise
        except (TypeError, ValueError) as exc:
            raise QoedError("bad-config", f"model parameters: {exc}") from None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["methods"] = list(self.methods)
        d["seeds"] = list(self.seeds)
        return d

    def with_overrides(self, *, seed=None, seeds=None, method=None, out=None,
                       delta_eig=None, alpha_eig=None, delta_cos=None, eps=None,
                       max_rounds=None) -> "ExperimentConfig":
        cfg = self
        if seed is not None and seeds is not None:
            raise QoedError("bad-config", "--seed and --seeds are exclusive")
        if seed is not None:
            cfg = replace(cfg, seeds=(int(seed),))
        if seeds is not None:
            if int(seeds) < 1:
                raise QoedError("bad-config", "--seeds must be >= 1")
            cfg = replace(cfg, seeds=tuple(range(int(seeds))))
        if method is not None:
            cfg = replace(cfg, methods=(method,))
        if out is not None:
            cfg = replace(cfg, out_dir=str(out))
        th = {k: v for k, v in dict(delta_eig=delta_eig, alpha_eig=alpha_eig,
                                    delta_cos=delta_cos, eps=eps).items() if v is not None}
        if th:
            cfg = replace(cfg, thresholds=_build(Thresholds, {**_asdict(cfg.thresholds), **th}))
        if max_rounds is not None:
            cfg = replace(cfg, exploration=_build(
                ExplorationConfig, {**_asdict(cfg.exploration), "max_rounds": int(max_rounds)}))
        return cfg


def _asdict(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def _build(cls, values: dict):
    try:
        return cls(**values)
    except QoedError as exc:
        raise QoedError("bad-config", str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise QoedError("bad-config", f"{cls.__name__}: {exc}") from None


def _coerce(cls, name: str, raw: str):
    """Convert an INI string to the type of ``cls.name``'s default."""
    default = {f.name: f.default for f in fields(cls)}[name]
    raw = raw.strip()
    if raw == "" or raw.lower() == "none":
        return None
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "yes", "1", "on")
        if isinstance(default, int) or name == "budget":
            return int(raw)
        if isinstance(default, float) or default is None:
            return float(raw)
    except ValueError:
        raise QoedError("bad-config", f"{cls.__name__}.{name}: cannot parse {raw!r}") from None
    return raw


def _section(cp, name, cls, base):
    if not cp.has_section(name):
        return base
    known = {f.name for f in fields(cls)}
    vals = _asdict(base)
    for key, raw in cp.items(name):
        if key not in known:
            raise QoedError("bad-config", f"[{name}] unknown key {key!r}")
        vals[key] = _coerce(cls, key, raw)
    return _build(cls, vals)


def _floats(raw: str):
    try:
        vals = [float(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise QoedError("bad-config", f"bad number list {raw!r}") from None
    return vals[0] if len(vals) == 1 else tuple(vals)


def load_config(path=None, text: str | None = None) -> ExperimentConfig:
    """Read an INI experiment file (or its ``text``) on top of the defaults."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        if text is not None:
            cp.read_string(text)
        elif path is not None:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
    except OSError as exc:
        raise QoedError("bad-config", f"cannot read {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise QoedError("bad-config", str(exc).splitlines()[0]) from None

    allowed = {"model", "experiment", "thresholds", "cem", "exploration", "sweep", "output"}
    extra = set(cp.sections()) - allowed
    if extra:
        raise QoedError("bad-config", f"unknown section(s) {sorted(extra)}")

    base = ExperimentConfig()
    kw = {}
    if cp.has_section("model"):
        params = {}
        for key, raw in cp.items("model"):
            if key == "name":
                kw["model_name"] = raw.strip()
            else:
                params[key] = _floats(raw)
        kw["model_params"] = params
    if cp.has_section("experiment"):
        for key, raw in cp.items("experiment"):
            if key == "methods":
                kw["methods"] = tuple(m.strip() for m in raw.split(",") if m.strip())
            elif key == "seeds":
                kw["seeds"] = parse_seeds(raw)
            elif key == "prior_width":
                kw["prior_width"] = _coerce(ExperimentConfig, "prior_width", raw)
            else:
                raise QoedError("bad-config", f"[experiment] unknown key {key!r}")
    kw["thresholds"] = _section(cp, "thresholds", Thresholds, base.thresholds)
    kw["cem"] = _section(cp, "cem", CemConfig, base.cem)
    kw["exploration"] = _section(cp, "exploration", ExplorationConfig, base.exploration)
    if cp.has_section("sweep"):
        sw = {}
        for key, raw in cp.items("sweep"):
            if key in ("delta_eig", "alpha_eig", "delta_cos"):
                sw[key] = parse_range(raw)
            elif key == "methods":
                sw[key] = tuple(m.strip() for m in raw.split(",") if m.strip())
            elif key == "seeds":
                sw[key] = parse_seeds(raw)
            else:
                raise QoedError("bad-config", f"[sweep] unknown key {key!r}")
        kw["sweep"] = replace(base.sweep, **sw)
    if cp.has_section("output"):
        for key, raw in cp.items("output"):
            if key != "dir":
                raise QoedError("bad-config", f"[output] unknown key {key!r}")
            kw["out_dir"] = raw.strip()
    try:
        cfg = ExperimentConfig(**kw)
    except QoedError as exc:
        if exc.code == "bad-config":
            raise
        raise QoedError("bad-config", str(exc)) from None
    cfg.make_model()  # surface model-parameter errors at load time
    return cfg
