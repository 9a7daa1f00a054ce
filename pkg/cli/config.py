"""Run configuration for the command-line front end.

A configuration is a JSON object with the blocks ``phase_space``,
``quadrature``, ``cross_sections``, ``fields``, ``kappa_sweep``,
``tolerances`` and ``output`` plus the scalars ``seed``, ``kappa``,
``points`` and ``fd_step_E``.  Missing entries fall back to the ``default``
preset (or to the preset named by a top-level ``"preset"`` key); unknown keys
are ignored.
"""

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

from core.errors import ConfigError, MollerPfError
from core.fields import TestField, field_from_id
from core.kinematics import CrossSectionSet, parse_xs_config
from core.phase import PhaseSpace
from core.quadrature import QuadratureSpec
from eval.collision import create_collision_context
from eval.csda import DEFAULT_SWEEP, KappaConfig
from eval.transport import TransportContext, create_transport_context

DEFAULT_TOLERANCES: Dict[str, float] = {
    "finite_part": 1e-8,
    "geometry": 1e-10,
    "trace": 1e-10,
    "collision": 1e-6,
    "derivative": 1e-6,
    "forms": 1e-5,
    "pairing": 1e-4,
    "variational": 1e-4,
    "additivity": 1e-8,
    "slope": 0.45,
}

_PRESETS: Dict[str, Dict[str, Any]] = {
    "default": {
        "phase_space": {
            "radius": 1.0, "E0": 1.0, "Em": 2.0, "sphere_polar": 8, "sphere_azimuth": 16,
            "radial_nodes": 4, "ball_polar": 4, "ball_azimuth": 8, "energy_nodes": 8,
        },
        "quadrature": {
            "panel_count": 12, "nodes_per_panel": 8, "endpoint_grading": 2.0,
            "sqrt_substitution": True, "circle_nodes": 32, "regular_nodes": 16,
            "pairing_panels": 6, "pairing_nodes": 6,
        },
        "cross_sections": {"family": "synthetic"},
        "fields": {
            "trial": ["abub*Y10*cm1", "a1*Y22*cb", "ax1*Y00*cm2"],
            "test": ["abub*Y10*c01", "abub*Y22*c02"],
        },
        "kappa": 1.5,
        "kappa_sweep": list(DEFAULT_SWEEP),
        "tolerances": dict(DEFAULT_TOLERANCES),
        "output": {"csv": None, "json": None},
        "seed": 0,
        "points": 16,
        "fd_step_E": 1e-4,
    },
    "fast": {
        "phase_space": {
            "sphere_polar": 6, "sphere_azimuth": 12, "radial_nodes": 3, "ball_polar": 3,
            "ball_azimuth": 6, "energy_nodes": 6,
        },
        "quadrature": {
            "panel_count": 8, "nodes_per_panel": 6, "circle_nodes": 16, "regular_nodes": 10,
            "pairing_panels": 4, "pairing_nodes": 5,
        },
        "points": 6,
    },
}

PRESETS = tuple(_PRESETS)

_PHASE_KEYS = {
    "radius": ("radius", float), "E0": ("e0", float), "Em": ("em", float),
    "sphere_polar": ("sphere_polar", int), "sphere_azimuth": ("sphere_azimuth", int),
    "radial_nodes": ("radial_nodes", int), "ball_polar": ("ball_polar", int),
    "ball_azimuth": ("ball_azimuth", int), "energy_nodes": ("energy_nodes", int),
}


@dataclass
class RunConfig:
    """Validated run configuration."""

    space: PhaseSpace
    quadrature: QuadratureSpec
    pairing_quadrature: QuadratureSpec
    circle_nodes: int
    regular_nodes: int
    cross_sections: Dict[str, Any]
    trial_fields: List[str]
    test_fields: List[str]
    kappa: KappaConfig
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output: Dict[str, Optional[str]] = field(default_factory=dict)
    seed: int = 0
    points: int = 16
    fd_step_E: float = 1e-4

    def xs(self) -> CrossSectionSet:
        return parse_xs_config(self.cross_sections)

    def field(self, field_id: str) -> TestField:
        s = self.space
        return field_from_id(field_id, s.radius, s.e0, s.em)

    def tolerance(self, name: str) -> float:
        return self.tolerances.get(name, DEFAULT_TOLERANCES.get(name, 0.0))

    def with_tolerance(self, tol: float) -> "RunConfig":
        """Copy with every residual tolerance set to ``tol`` (the slope threshold is kept)."""
        out = copy.copy(self)
        out.tolerances = {k: (v if k == "slope" else float(tol))
                          for k, v in self.tolerances.items()}
        return out

    def build_context(self, logger: Optional[Callable[[str], None]] = None) -> TransportContext:
        collision = create_collision_context(
            self.xs(),
            self.space,
            self.quadrature,
            logger=logger,
            circle_nodes=self.circle_nodes,
            regular_nodes=self.regular_nodes,
            sqrt_substitution=self.quadrature.sqrt_substitution,
        )
        return create_transport_context(
            collision,
            logger=logger,
            fd_step_E=self.fd_step_E,
            pairing_quadrature=self.pairing_quadrature,
        )

    def to_dict(self) -> Dict[str, Any]:
        s, q, p = self.space, self.quadrature, self.pairing_quadrature
        return {
            "phase_space": {
                "radius": s.radius, "E0": s.e0, "Em": s.em, "sphere_polar": s.sphere_polar,
                "sphere_azimuth": s.sphere_azimuth, "radial_nodes": s.radial_nodes,
                "ball_polar": s.ball_polar, "ball_azimuth": s.ball_azimuth,
                "energy_nodes": s.energy_nodes,
            },
            "quadrature": {
                "panel_count": q.panel_count, "nodes_per_panel": q.nodes_per_panel,
                "endpoint_grading": q.endpoint_grading, "sqrt_substitution": q.sqrt_substitution,
                "circle_nodes": self.circle_nodes, "regular_nodes": self.regular_nodes,
                "pairing_panels": p.panel_count, "pairing_nodes": p.nodes_per_panel,
            },
            "cross_sections": dict(self.cross_sections),
            "fields": {"trial": list(self.trial_fields), "test": list(self.test_fields)},
            "kappa": self.kappa.kappa,
            "kappa_sweep": list(self.kappa.kappa_sweep),
            "tolerances": dict(self.tolerances),
            "output": dict(self.output),
            "seed": self.seed,
            "points": self.points,
            "fd_step_E": self.fd_step_E,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def get_preset(name: str) -> Dict[str, Any]:
    """Raw config dict of a named preset (``default`` or ``fast``)."""
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {list(PRESETS)}")
    if name == "default":
        return copy.deepcopy(_PRESETS["default"])
    return _merge(_PRESETS["default"], _PRESETS[name])


def _load_file(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def parse_run_config(config: Optional[Union[str, Path, Dict[str, Any]]] = None) -> RunConfig:
    """Parse a config given as None (defaults), a preset name, a dict or a JSON file path."""
    if config is None:
        raw: Dict[str, Any] = {}
    elif isinstance(config, dict):
        raw = config
    elif isinstance(config, str) and config in _PRESETS:
        raw = {"preset": config}
    elif isinstance(config, (str, Path)):
        raw = _load_file(config)
    else:
        raise ConfigError(f"unsupported config type: {type(config).__name__}")
    preset = raw.get("preset", "default")
    if not isinstance(preset, str):
        raise ConfigError("preset must be a string")
    merged = _merge(get_preset(preset), {k: v for k, v in raw.items() if k != "preset"})
    return validate_run_config(merged)


def _number(block: Dict[str, Any], key: str, kind: Callable[[Any], Any], where: str) -> Any:
    val = block[key]
    if isinstance(val, bool):
        raise ConfigError(f"{where}.{key} must be numeric, got {val!r}")
    try:
        out = kind(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key} must be numeric, got {val!r}") from exc
    if isinstance(out, float) and math.isnan(out):
        raise ConfigError(f"{where}.{key} must not be NaN")
    return out


def _block(raw: Dict[str, Any], name: str) -> Dict[str, Any]:
    val = raw.get(name, {})
    if val is None:
        return {}
    if not isinstance(val, dict):
        raise ConfigError(f"{name} must be an object")
    return val


def _field_list(fields: Dict[str, Any], key: str) -> List[str]:
    ids = fields.get(key, [])
    if isinstance(ids, str):
        ids = [ids]
    if not isinstance(ids, list) or not all(isinstance(i, str) for i in ids):
        raise ConfigError(f"fields.{key} must be a list of field ids")
    return list(ids)


def validate_run_config(raw: Dict[str, Any]) -> RunConfig:
    """Coerce and check a merged config dict.

    - Keeps only known keys of each block
    - Coerces numbers to float or int
    - Raises ConfigError on invariant violations
    """
    phase = _block(raw, "phase_space")
    kwargs = {attr: _number(phase, key, kind, "phase_space")
              for key, (attr, kind) in _PHASE_KEYS.items() if key in phase}
    try:
        space = PhaseSpace(**kwargs)
    except MollerPfError as exc:
        raise ConfigError(f"phase_space: {exc}") from exc

    quad = _block(raw, "quadrature")
    try:
        quadrature = QuadratureSpec(
            panel_count=_number(quad, "panel_count", int, "quadrature"),
            nodes_per_panel=_number(quad, "nodes_per_panel", int, "quadrature"),
            endpoint_grading=_number(quad, "endpoint_grading", float, "quadrature"),
            sqrt_substitution=bool(quad.get("sqrt_substitution", True)),
        )
        pairing = QuadratureSpec(
            panel_count=_number(quad, "pairing_panels", int, "quadrature"),
            nodes_per_panel=_number(quad, "pairing_nodes", int, "quadrature"),
        )
    except KeyError as exc:
        raise ConfigError(f"quadrature.{exc.args[0]} is missing") from exc
    except MollerPfError as exc:
        raise ConfigError(f"quadrature: {exc}") from exc
    circle_nodes = _number(quad, "circle_nodes", int, "quadrature")
    regular_nodes = _number(quad, "regular_nodes", int, "quadrature")
    if circle_nodes < 1 or regular_nodes < 1:
        raise ConfigError("quadrature.circle_nodes and regular_nodes must be positive")

    xs_block = _block(raw, "cross_sections")
    try:
        parse_xs_config(xs_block)
    except MollerPfError as exc:
        raise ConfigError(f"cross_sections: {exc}") from exc

    fields = _block(raw, "fields")
    trial = _field_list(fields, "trial")
    test = _field_list(fields, "test")
    for fid in trial + test:
        try:
            field_from_id(fid, space.radius, space.e0, space.em)
        except MollerPfError as exc:
            raise ConfigError(f"fields: {exc}") from exc

    sweep = raw.get("kappa_sweep", list(DEFAULT_SWEEP))
    if not isinstance(sweep, list):
        raise ConfigError("kappa_sweep must be a list of numbers")
    try:
        kappa = KappaConfig(
            kappa=_number(raw, "kappa", float, "config"),
            kappa_sweep=tuple(_number({"k": k}, "k", float, "kappa_sweep") for k in sweep),
        )
    except KeyError as exc:
        raise ConfigError(f"{exc.args[0]} is missing") from exc

    tolerances = dict(DEFAULT_TOLERANCES)
    for key, val in _block(raw, "tolerances").items():
        tol = _number({key: val}, key, float, "tolerances")
        if tol < 0.0:
            raise ConfigError(f"tolerances.{key} must be non-negative, got {tol}")
        tolerances[key] = tol

    output = {k: (None if v is None else str(v)) for k, v in _block(raw, "output").items()
              if k in ("csv", "json")}

    seed = _number(raw, "seed", int, "config") if raw.get("seed") is not None else 0
    points = _number(raw, "points", int, "config")
    if points < 1:
        raise ConfigError(f"points must be positive, got {points}")
    fd_step = _number(raw, "fd_step_E", float, "config")
    if not 0.0 < fd_step < (space.em - space.e0) / 10.0:
        raise ConfigError(f"fd_step_E must lie in (0, (Em-E0)/10), got {fd_step}")

    return RunConfig(
        space=space,
        quadrature=quadrature,
        pairing_quadrature=pairing,
        circle_nodes=circle_nodes,
        regular_nodes=regular_nodes,
        cross_sections=dict(xs_block),
        trial_fields=trial,
        test_fields=test,
        kappa=kappa,
        tolerances=tolerances,
        output=output,
        seed=seed,
        points=points,
        fd_step_E=fd_step,
    )


def parse_kappa_list(text: str) -> List[float]:
    """``"1.5,1.25,1.125"`` -> [1.5, 1.25, 1.125]."""
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"--kappa-list must be comma-separated numbers, got {text!r}") from exc
    if not values:
        raise ConfigError("--kappa-list is empty")
    return values
