"""Flat ``key = value`` experiment configuration files.

Lines starting with ``#`` are comments. Keys (defaults in SCHEMA):

    name          preset name
    n             number of nodes
    B             replications; replication r uses seed base_seed + r
    base_seed     integer
    eta_design    uniform | clustered
    eta_low       lower end of the uniform draw (bulk, if clustered)
    eta_high      upper end
    outliers      comma list of fixed values appended after the bulk
    error         logistic | beta | exponential
    error_loc, error_scale, error_alpha, error_beta, error_rate
    methods       comma list from: semiparametric, logit
    transforms    comma list from: dbmm, std
    phi           true | false: compute the studentised statistic and V0
    max_iters, tol_step, tol_obj, lambda0, lambda_growth, n_restarts, solver_seed
    bandwidth     auto | positive number
    trim_bound    standardisation trimming bound
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .gmm import SolverConfig
from .kernel import KernelSpec
from .model import Beta, ClusteredDesign, Exponential, Logistic, UniformInterval
from .transform import TransformMode, TransformSpec

SCHEMA = {
    "name": "custom",
    "n": "100",
    "B": "20",
    "base_seed": "0",
    "eta_design": "uniform",
    "eta_low": "-1",
    "eta_high": "3",
    "outliers": "",
    "error": "logistic",
    "error_loc": "0",
    "error_scale": "1",
    "error_alpha": "",
    "error_beta": "",
    "error_rate": "",
    "methods": "semiparametric",
    "transforms": "dbmm",
    "phi": "false",
    "max_iters": "5000",
    "tol_step": "1e-8",
    "tol_obj": "1e-12",
    "lambda0": "1e-3",
    "lambda_growth": "10",
    "n_restarts": "3",
    "solver_seed": "0",
    "bandwidth": "auto",
    "trim_bound": "4",
}

METHODS = ("semiparametric", "logit")


def parse_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_config(cfg: dict) -> str:
    return "".join(f"{k} = {cfg[k]}\n" for k in SCHEMA if k in cfg)


def _list(s):
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _bool(s):
    s = s.lower()
    if s in ("true", "yes", "1"):
        return True
    if s in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    n: int
    B: int
    base_seed: int
    eta_design: object
    error: object
    methods: tuple
    transforms: tuple
    phi: bool
    solver: SolverConfig
    kernel: KernelSpec
    settings: tuple  # canonical (key, value) pairs the preset was built from

    @property
    def canonical_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.settings)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text.encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "ExperimentPreset":
        merged = dict(self.settings)
        merged.update({k: str(v) for k, v in kw.items()})
        return preset_from_mapping(merged)


def preset_from_mapping(cfg: dict) -> ExperimentPreset:
    unknown = set(cfg) - set(SCHEMA)
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)}")
    c = dict(SCHEMA)
    c.update(cfg)
    lo, hi = float(c["eta_low"]), float(c["eta_high"])
    if c["eta_design"] == "uniform":
        design = UniformInterval(lo, hi)
    elif c["eta_design"] == "clustered":
        design = ClusteredDesign(lo, hi, tuple(float(x) for x in _list(c["outliers"])))
    else:
        raise ValueError(f"unknown eta_design {c['eta_design']!r}")
    fam = c["error"]
    if fam == "logistic":
        err = Logistic(float(c["error_loc"]), float(c["error_scale"]))
    elif fam == "beta":
        err = Beta(float(c["error_alpha"]), float(c["error_beta"]))
    elif fam == "exponential":
        err = Exponential(float(c["error_rate"]))
    else:
        raise ValueError(f"unknown error family {fam!r}")
    methods = _list(c["methods"])
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    transforms = tuple(TransformMode(t) for t in _list(c["transforms"]))
    solver = SolverConfig(
        max_iters=int(c["max_iters"]),
        tol_step=float(c["tol_step"]),
        tol_obj=float(c["tol_obj"]),
        levenberg_lambda0=float(c["lambda0"]),
        lambda_growth=float(c["lambda_growth"]),
        n_restarts=int(c["n_restarts"]),
        seed=int(c["solver_seed"]),
    )
    bw = None if c["bandwidth"] == "auto" else float(c["bandwidth"])
    n, B = int(c["n"]), int(c["B"])
    if n < 4 or B < 1:
        raise ValueError("need n >= 4 and B >= 1")
    float(c["trim_bound"])
    return ExperimentPreset(
        name=c["name"],
        n=n,
        B=B,
        base_seed=int(c["base_seed"]),
        eta_design=design,
        error=err,
        methods=methods,
        transforms=transforms,
        phi=_bool(c["phi"]),
        solver=solver,
        kernel=KernelSpec(bandwidth=bw),
        settings=tuple((k, c[k]) for k in SCHEMA),
    )


def trim_bound(preset: ExperimentPreset) -> float:
    return float(dict(preset.settings)["trim_bound"])


def transform_specs(preset: ExperimentPreset):
    tb = trim_bound(preset)
    return [TransformSpec(t, tb) for t in preset.transforms]


def builtin_presets() -> list[str]:
    root = resources.files(__package__) / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name_or_path) -> ExperimentPreset:
    """A built-in preset by name, or a config file path."""
    p = Path(str(name_or_path))
    if p.suffix == ".cfg" or p.is_file():
        text = p.read_text()
    else:
        res = resources.files(__package__) / "presets" / f"{name_or_path}.cfg"
        if not res.is_file():
            raise ValueError(f"no preset named {name_or_path!r}; known: {', '.join(builtin_presets())}")
        text = res.read_text()
    return preset_from_mapping(parse_config(text))
