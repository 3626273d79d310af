"""JSON experiment configuration.

Schema (all keys except ``target`` optional)::

    {
      "target": "example1",            # quadratic | example1 | example2
      "dim": null,                     # only used by "quadratic"
      "initial": "example1",           # example1 | example2 | standard_normal | wide_normal
      "sampler": "cenlmc",             # lmc | mala | enlmc | cenlmc | coupled
      "params": {"h": 0.1, "n": 10000, "eta": 0.1, "r1": 0.67, "r2": 1.5,
                 "n_star": 1000, "m_f": 20.0, "m_iters": 100, "seed": 0, "rho": 0.5},
      "diagnostics": {"ratio": true, "w1": true, "coupling": true, "moments": true,
                      "w1_projections": 64},
      "checkpoints": null,             # list of iterations for samples/scatter; null = final only
      "scatter": false,                # write scatter_<m>.svg at each checkpoint (d = 2)
      "output_dir": "out"
    }
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .state import SamplerConfig
from .targets import INITIALS, TARGETS

__all__ = ["ConfigError", "DiagnosticsToggles", "ExperimentConfig", "load_config", "SAMPLERS"]

SAMPLERS = ("lmc", "mala", "enlmc", "cenlmc", "coupled")
_INT_PARAMS = {"n", "n_star", "m_iters", "seed"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DiagnosticsToggles:
    ratio: bool = True
    w1: bool = True
    coupling: bool = True
    moments: bool = True
    w1_projections: int = 64


@dataclass(frozen=True)
class ExperimentConfig:
    target: str
    initial: Optional[str] = None
    sampler: str = "cenlmc"
    dim: Optional[int] = None
    params: SamplerConfig = field(default_factory=SamplerConfig)
    diagnostics: DiagnosticsToggles = field(default_factory=DiagnosticsToggles)
    checkpoints: Optional[tuple] = None
    scatter: bool = False
    output_dir: str = "out"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checkpoints"] = None if self.checkpoints is None else list(self.checkpoints)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data, source: str = "<config>") -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: top level must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigError(f"{source}: unknown field(s) {extra}")
        if "target" not in data or data["target"] is None:
            raise ConfigError(f"{source}: missing required field 'target'")
        target = _expect(data["target"], str, source, "target")
        if target not in TARGETS:
            raise ConfigError(f"{source}: field 'target': unknown target {target!r}, choose from {sorted(TARGETS)}")
        initial = data.get("initial")
        if initial is not None:
            _expect(initial, str, source, "initial")
            if initial not in INITIALS:
                raise ConfigError(f"{source}: field 'initial': unknown initial {initial!r}, choose from {sorted(INITIALS)}")
        sampler = _expect(data.get("sampler", "cenlmc"), str, source, "sampler")
        if sampler not in SAMPLERS:
            raise ConfigError(f"{source}: field 'sampler': must be one of {list(SAMPLERS)}")
        dim = data.get("dim")
        if dim is not None:
            dim = _expect(dim, int, source, "dim")
        params = _section(data.get("params", {}), SamplerConfig, source, "params")
        diags = _section(data.get("diagnostics", {}), DiagnosticsToggles, source, "diagnostics")
        cps = data.get("checkpoints")
        if cps is not None:
            if not isinstance(cps, list):
                raise ConfigError(f"{source}: field 'checkpoints': expected a list of iterations")
            cps = tuple(_expect(c, int, source, f"checkpoints[{k}]") for k, c in enumerate(cps))
            bad = [c for c in cps if not 0 <= c <= params.m_iters]
            if bad:
                raise ConfigError(f"{source}: field 'checkpoints': {bad} outside 0..{params.m_iters}")
        return cls(
            target=target,
            initial=initial,
            sampler=sampler,
            dim=dim,
            params=params,
            diagnostics=diags,
            checkpoints=cps,
            scatter=_expect(data.get("scatter", False), bool, source, "scatter"),
            output_dir=_expect(data.get("output_dir", "out"), str, source, "output_dir"),
        )

    @classmethod
    def from_json(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(data, source)

    def with_overrides(self, seed=None, output_dir=None, **params) -> "ExperimentConfig":
        """CLI flags win over file fields."""
        changes = {k: v for k, v in params.items() if v is not None}
        if seed is not None:
            changes["seed"] = int(seed)
        new_params = self.params.replace(**changes) if changes else self.params
        out = self.output_dir if output_dir is None else str(output_dir)
        return ExperimentConfig(
            self.target, self.initial, self.sampler, self.dim, new_params,
            self.diagnostics, self.checkpoints, self.scatter, out,
        )


def _expect(value, kind, source, name):
    ok = isinstance(value, kind) and not (kind is int and isinstance(value, bool))
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if not ok:
        raise ConfigError(f"{source}: field '{name}': expected {kind.__name__}, got {value!r}")
    return float(value) if kind is float else value


def _section(raw, cls, source, name):
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: field '{name}': expected an object")
    spec = {f.name: f for f in fields(cls)}
    extra = sorted(set(raw) - set(spec))
    if extra:
        raise ConfigError(f"{source}: field '{name}': unknown key(s) {extra}")
    values = {}
    for key, val in raw.items():
        default = getattr(cls(), key)
        kind = bool if isinstance(default, bool) else int if (key in _INT_PARAMS or isinstance(default, int)) else float
        values[key] = _expect(val, kind, source, f"{name}.{key}")
    try:
        return cls(**values)
    except ValueError as exc:
        raise ConfigError(f"{source}: field '{name}': {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return ExperimentConfig.from_json(text, str(path))
