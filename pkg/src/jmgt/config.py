"""Experiment configuration: one YAML file with six blocks plus a seed."""
from __future__ import annotations

import copy
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigurationError
from .medium import MemoryKernel, MediumParams, kernel_from_dict, params_from_dict

SCHEMA_VERSION = "1.0"
OUTPUT_ENV = "JMGT_OUTPUT_DIR"
BLOCKS = ("medium", "kernel", "grid", "solver", "analysis", "output")

DEFAULTS = {
    "medium": {"tau": 1.0, "c": 1.0, "b": 1.0, "k": 0.0, "alpha": 1.0},
    "kernel": {"kind": "exponential", "m": 0.5, "tau_g": 1.0},
    "grid": {"n": 1, "N": 256, "L": 40.0},
    "solver": {"dt": 0.02, "t_end": 10.0, "scheme": "ExactLinear", "nonlinearity_form": "def_F",
               "snapshot_stride": 50, "representation": "reduced", "history_stride": 0,
               "dealias": True},
    "analysis": {
        "s": 2,
        "rho_grid": {"min": 1e-3, "max": 1e3, "count": 40},
        "fit_window": [1e2, 1e4],
        "fit_samples": 40,
        "tolerances": {"decay": 0.05, "r2_min": 0.999, "residual_factor": 10.0},
        "initial_data": {
            "psi0": {"kind": "gaussian", "amplitude": 1.0, "width": 1.0},
            "psi1": {"kind": "gaussian", "amplitude": 0.5, "width": 1.5},
            "psi2": {"kind": "zero"},
            "scale": 1.0,
        },
        "decay": {"n": 3, "quantities": ["U0", "U1", "v0", "w0"], "regularity_loss": False,
                  "s_data": 0.0},
        "verify": {"energy": True, "appendix": True, "oracles": True, "kappas": [0, 1]},
        "fault_injection": None,
    },
    "output": {"directory": None, "formats": ["csv", "json"], "figures": False},
    "seed": 0,
}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-3`` style floats (YAML 1.1 needs a dot)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"""),
    list("-+0123456789"),
)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    medium: dict = field(default_factory=dict)
    kernel: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0
    source: str | None = None

    @classmethod
    def from_dict(cls, raw: dict | None, source=None) -> "ExperimentConfig":
        raw = raw or {}
        if not isinstance(raw, dict):
            raise ConfigurationError("config root must be a mapping")
        unknown = set(raw) - set(BLOCKS) - {"seed"}
        if unknown:
            raise ConfigurationError(f"unknown config blocks: {sorted(unknown)}")
        merged = _merge(DEFAULTS, raw)
        return cls(**{b: merged[b] for b in BLOCKS}, seed=int(merged["seed"]), source=source)

    def as_dict(self) -> dict:
        d = {b: copy.deepcopy(getattr(self, b)) for b in BLOCKS}
        d["seed"] = self.seed
        return d

    def override(self, dotted: str, value) -> None:
        """Set ``block.key[.subkey]`` to ``value`` (already parsed)."""
        parts = dotted.split(".")
        if parts[0] == "seed" and len(parts) == 1:
            self.seed = int(value)
            return
        if parts[0] not in BLOCKS or len(parts) < 2:
            raise ConfigurationError(f"bad override key {dotted!r}")
        node = getattr(self, parts[0])
        for p in parts[1:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value

    # typed views ---------------------------------------------------------
    def params(self) -> MediumParams:
        return params_from_dict(self.medium)

    def kernel_obj(self) -> MemoryKernel:
        block = dict(self.kernel)
        if "csv" in block and self.source and not os.path.isabs(block["csv"]):
            block["csv"] = str(Path(self.source).parent / block["csv"])
        return kernel_from_dict(block)

    def output_dir(self) -> Path:
        d = self.output.get("directory") or os.environ.get(OUTPUT_ENV) or "jmgt_out"
        return Path(d)

    def validate(self) -> None:
        """Cross-field checks done before any run."""
        if "csv" in self.kernel:
            path = Path(self.kernel["csv"])
            if self.source and not path.is_absolute():
                path = Path(self.source).parent / path
            if not path.exists():
                raise ConfigurationError(f"kernel CSV {path} does not exist")
        p = self.params()
        scheme = self.solver.get("scheme", "ExactLinear")
        if (scheme == "ExactLinear") != (p.k == 0):
            raise ConfigurationError("ExactLinear is used exactly when k = 0")
        g = self.grid
        if int(g.get("n", 1)) not in (1, 2, 3):
            raise ConfigurationError("grid.n must be 1, 2 or 3")
        if int(g.get("N", 0)) < 4 or int(g["N"]) % 2:
            raise ConfigurationError("grid.N must be an even integer >= 4")
        if not float(g.get("L", 0)) > 0:
            raise ConfigurationError("grid.L must be positive")
        rep = self.solver.get("representation", "reduced")
        if rep not in ("reduced", "history"):
            raise ConfigurationError("solver.representation must be 'reduced' or 'history'")
        win = self.analysis.get("fit_window")
        if not (isinstance(win, (list, tuple)) and len(win) == 2 and 0 < float(win[0]) < float(win[1])):
            raise ConfigurationError("analysis.fit_window must be [t_lo, t_hi] with 0 < t_lo < t_hi")


def load_config(path=None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig.from_dict({})
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file {p} does not exist")
    try:
        raw = yaml.load(p.read_text(), Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {p}: {exc}") from None
    return ExperimentConfig.from_dict(raw, source=str(p))


def parse_value(text: str):
    """Parse an override value with YAML scalar rules (``1e-3``, ``true``, lists)."""
    return yaml.load(text, Loader=_Loader)
