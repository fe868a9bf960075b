"""Run configuration: a single JSON document with model, solution, checks, drift, mc and output."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

from .drift import KINDS
from .fields import ExactSolution
from .geometry import GeometryError, model_from_dict
from .inequality import THEOREMS

NEEDS_ALPHA = {"liyau_global", "liyau_local", "liyau_local_general", "ricci_local_pair"}
NEEDS_RICCI_FLOW = {"ricci_compact", "ricci_local_pair"}
NEEDS_BALL = {"hamilton_local", "hamilton_local_general", "liyau_local", "liyau_local_general",
              "liyau_lower_order_local", "liyau_lower_order_general", "ricci_local_pair"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    model: dict
    solution: dict = field(default_factory=lambda: {"type": "closed_form", "mode": 1, "amplitude": 0.5})
    grid: dict = field(default_factory=lambda: {"n_space": 64, "nt": 64})
    checks: list = field(default_factory=list)
    drift: list = field(default_factory=list)
    mc: dict | None = None
    output: dict = field(default_factory=lambda: {"directory": ".", "formats": ["json"]})

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict) or "model" not in data:
            raise ConfigError("config needs a 'model' object")
        known = {"model", "solution", "grid", "checks", "drift", "mc", "output"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        cfg = cls(**copy.deepcopy(data))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        out = {"model": self.model, "solution": self.solution, "grid": self.grid,
               "checks": self.checks, "drift": self.drift, "output": self.output}
        if self.mc is not None:
            out["mc"] = self.mc
        return copy.deepcopy(out)

    def build_model(self):
        try:
            return model_from_dict(self.model)
        except (GeometryError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"model: {exc}") from exc

    def validate(self):
        model = self.build_model()
        validity = model.validity()
        if not validity.valid:
            raise ConfigError(f"model: {validity.message}")
        sol = self.solution
        if sol.get("type") not in ("closed_form", "numeric"):
            raise ConfigError("solution.type must be 'closed_form' or 'numeric'")
        if sol["type"] == "closed_form":
            if not abs(float(sol.get("amplitude", 0.0))) < 1:
                raise ConfigError("solution.amplitude must satisfy |amplitude| < 1")
            mode = sol.get("mode", 0)
            try:
                ExactSolution(model, tuple(mode) if isinstance(mode, list) else mode,
                              float(sol.get("amplitude", 0.0)))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"solution.mode: {exc}") from exc
        for key in ("n_space", "nt"):
            if int(self.grid.get(key, 0)) < 8:
                raise ConfigError(f"grid.{key} must be >= 8")
        for i, chk in enumerate(self.checks):
            name = chk.get("theorem")
            if name not in THEOREMS:
                raise ConfigError(f"checks[{i}].theorem: unknown theorem {name!r}")
            if name in NEEDS_RICCI_FLOW and not model.is_ricci_flow:
                raise ConfigError(f"checks[{i}].theorem: {name} needs a Ricci flow, "
                                  f"{model.kind} is not one")
            if name in NEEDS_ALPHA:
                alpha = chk.get("alpha")
                if alpha is None or not float(alpha) > 1:
                    raise ConfigError(f"checks[{i}].alpha: {name} requires alpha > 1 (got {alpha})")
            if name in NEEDS_BALL:
                if chk.get("cutoff", "distance") == "distance":
                    if "rho" not in chk or not float(chk["rho"]) > 0:
                        raise ConfigError(f"checks[{i}].rho: {name} requires rho > 0")
                elif chk["cutoff"] == "square":
                    if not 0 < float(chk.get("width", 0)) < 3.141592653589793:
                        raise ConfigError(f"checks[{i}].width: must lie in (0, pi)")
                else:
                    raise ConfigError(f"checks[{i}].cutoff: use 'distance' or 'square'")
                if "x0" not in chk:
                    raise ConfigError(f"checks[{i}].x0: {name} requires a center")
        for i, d in enumerate(self.drift):
            if d.get("kind") not in KINDS:
                raise ConfigError(f"drift[{i}].kind: unknown functional {d.get('kind')!r}")
            if d["kind"] == "S_hat_ricci" and model.kind != "ShrinkingSphere":
                raise ConfigError(f"drift[{i}].kind: S_hat_ricci is defined on ShrinkingSphere only")
            if d["kind"] == "S_tilde_liyau" and not float(d.get("alpha", 0)) > 1:
                raise ConfigError(f"drift[{i}].alpha: S_tilde_liyau requires alpha > 1")
        if self.mc is not None:
            mc = self.mc
            for key in ("n_paths", "dr", "t_star"):
                if key not in mc:
                    raise ConfigError(f"mc.{key} is required")
            if not 0 < float(mc["t_star"]) <= model.T:
                raise ConfigError("mc.t_star must lie in (0, T]")
        fmts = self.output.get("formats", ["json"])
        if any(f not in ("json", "csv") for f in fmts):
            raise ConfigError("output.formats entries must be 'json' or 'csv'")


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return RunConfig.from_dict(data)
