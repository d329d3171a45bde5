"""Configuration: scenario files, app config (TOML or JSON), model resolution.

Model endpoints resolve from, in order: an explicit ``--model`` spec
(``scripted:<file>`` or a model name), the config file's ``[model]`` section,
and the ``EAA_MODEL_BASE_URL`` / ``EAA_MODEL_NAME`` / ``EAA_API_KEY``
environment variables.  ``EAA_CONFIG`` points at the config file.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .beamline import (
    AxisLimits,
    LineGrid,
    SamplePattern,
    ScenarioConfig,
    SiemensStar,
    SpeckleDots,
    default_scenario,
)
from .model import Model, ModelConfig, OpenAIModel, load_script_file

ENV_BASE_URL = "EAA_MODEL_BASE_URL"
ENV_MODEL_NAME = "EAA_MODEL_NAME"
ENV_API_KEY = "EAA_API_KEY"
ENV_CONFIG = "EAA_CONFIG"


class ConfigError(Exception):
    pass


@dataclass
class MemoryConfig:
    enabled: bool = False
    k: int = 4
    dimension: int = 256
    path: Optional[str] = None


@dataclass
class AppConfig:
    model: Optional[ModelConfig] = None
    scenario_path: Optional[str] = None
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    approval_timeout: float = 300.0  # headless approval wait, seconds
    out_dir: str = "eaa_out"


def _read_structured(path: str | Path) -> dict[str, Any]:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    if p.suffix.lower() == ".json":
        return json.loads(p.read_text(encoding="utf-8"))
    with p.open("rb") as fh:
        return tomllib.load(fh)


def load_app_config(path: str | Path | None = None) -> AppConfig:
    """Load the app config from *path*, the EAA_CONFIG file, or environment only."""
    path = path or os.environ.get(ENV_CONFIG)
    cfg = AppConfig()
    if path:
        raw = _read_structured(path)
        model_raw = raw.get("model", {})
        if model_raw.get("base_url"):
            cfg.model = ModelConfig(
                base_url=model_raw["base_url"],
                model_name=model_raw.get("name", ""),
                api_key=model_raw.get("api_key", ""),
                temperature=float(model_raw.get("temperature", 1.0)),
                reasoning_effort=model_raw.get("reasoning_effort"),
                timeout=float(model_raw.get("timeout", 120.0)),
            )
        scenario = raw.get("scenario")
        if isinstance(scenario, str):
            cfg.scenario_path = scenario
        elif isinstance(scenario, dict) and scenario.get("path"):
            cfg.scenario_path = scenario["path"]
        mem = raw.get("memory", {})
        cfg.memory = MemoryConfig(
            enabled=bool(mem.get("enabled", False)),
            k=int(mem.get("k", 4)),
            dimension=int(mem.get("dimension", 256)),
            path=mem.get("path"),
        )
        guard = raw.get("guardrails", {})
        cfg.approval_timeout = float(guard.get("approval_timeout", 300.0))
        cfg.out_dir = raw.get("out_dir", "eaa_out")

    # environment overrides
    base_url = os.environ.get(ENV_BASE_URL)
    if base_url:
        existing = cfg.model
        cfg.model = ModelConfig(
            base_url=base_url,
            model_name=os.environ.get(ENV_MODEL_NAME, existing.model_name if existing else ""),
            api_key=os.environ.get(ENV_API_KEY, existing.api_key if existing else ""),
            temperature=existing.temperature if existing else 1.0,
            timeout=existing.timeout if existing else 120.0,
        )
    elif cfg.model is not None:
        key = os.environ.get(ENV_API_KEY)
        if key:
            cfg.model = ModelConfig(
                base_url=cfg.model.base_url,
                model_name=os.environ.get(ENV_MODEL_NAME, cfg.model.model_name),
                api_key=key,
                temperature=cfg.model.temperature,
                reasoning_effort=cfg.model.reasoning_effort,
                timeout=cfg.model.timeout,
            )
    return cfg


def resolve_model(spec: str | None, config: AppConfig) -> Model:
    """Turn a model spec into a usable model handle.

    ``scripted:<file>`` loads a JSON script; otherwise *spec* is a model name
    served by the configured endpoint.
    """
    if spec and spec.startswith("scripted:"):
        path = spec.split(":", 1)[1]
        if not Path(path).exists():
            raise ConfigError(f"script file not found: {path}")
        return load_script_file(path)
    if config.model is None:
        raise ConfigError(
            f"no model endpoint configured: set {ENV_BASE_URL} (and {ENV_API_KEY}) "
            "or provide a config file with a [model] section"
        )
    mc = config.model
    if spec:
        mc = ModelConfig(
            base_url=mc.base_url,
            model_name=spec,
            api_key=mc.api_key,
            temperature=mc.temperature,
            reasoning_effort=mc.reasoning_effort,
            timeout=mc.timeout,
        )
    if not mc.model_name:
        raise ConfigError(f"no model name configured: set {ENV_MODEL_NAME} or pass --model")
    if not mc.api_key:
        raise ConfigError(f"missing API key for remote model: set {ENV_API_KEY}")
    return OpenAIModel(mc)


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------


def scenario_from_dict(raw: dict[str, Any]) -> ScenarioConfig:
    primitives: list[SiemensStar | LineGrid] = []
    pattern_raw = raw.get("pattern", {})
    for star in pattern_raw.get("stars", []):
        primitives.append(
            SiemensStar(
                center=tuple(star["center"]),
                radius=float(star["radius"]),
                n_spokes=int(star["n_spokes"]),
            )
        )
    for grid in pattern_raw.get("grids", []):
        primitives.append(
            LineGrid(
                pitch=float(grid["pitch"]),
                line_width=float(grid["line_width"]),
                origin=tuple(grid.get("origin", (0.0, 0.0))),
            )
        )
    for spk in pattern_raw.get("speckles", []):
        primitives.append(
            SpeckleDots(
                cell=float(spk.get("cell", 1.5)),
                fill=float(spk.get("fill", 0.25)),
                radius=float(spk.get("radius", 0.3)),
                salt=int(spk.get("salt", 0)),
                amplitude=float(spk.get("amplitude", 0.3)),
            )
        )
    base = default_scenario()
    pattern = (
        SamplePattern(
            primitives=tuple(primitives),
            background=float(pattern_raw.get("background", 0.05)),
            feature=float(pattern_raw.get("feature", 1.0)),
        )
        if primitives or pattern_raw
        else base.pattern
    )
    limits_raw = raw.get("limits", {})

    def limits(axis: str, fallback: AxisLimits) -> AxisLimits:
        pair = limits_raw.get(axis)
        return AxisLimits(float(pair[0]), float(pair[1])) if pair else fallback

    noise = raw.get("noise_snr")
    return ScenarioConfig(
        pattern=pattern,
        z_focus=float(raw.get("z_focus", base.z_focus)),
        z_start=float(raw.get("z_start", base.z_start)),
        x_limits=limits("x", base.x_limits),
        y_limits=limits("y", base.y_limits),
        z_limits=limits("z", base.z_limits),
        sigma0=float(raw.get("sigma0", base.sigma0)),
        blur_coeff=float(raw.get("blur_coeff", base.blur_coeff)),
        drift_coeff=tuple(raw.get("drift_coeff", base.drift_coeff)),
        noise_snr=float(noise) if noise is not None else None,
        point_cap=int(raw.get("point_cap", base.point_cap)),
        seed=int(raw.get("seed", base.seed)),
    )


def load_scenario(path: str | Path | None) -> ScenarioConfig:
    """Load a scenario file (TOML or JSON); None means the built-in default."""
    if path is None:
        return default_scenario()
    return scenario_from_dict(_read_structured(path))


def scenario_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    stars = [
        {"center": list(p.center), "radius": p.radius, "n_spokes": p.n_spokes}
        for p in cfg.pattern.primitives
        if isinstance(p, SiemensStar)
    ]
    grids = [
        {"pitch": p.pitch, "line_width": p.line_width, "origin": list(p.origin)}
        for p in cfg.pattern.primitives
        if isinstance(p, LineGrid)
    ]
    speckles = [
        {"cell": p.cell, "fill": p.fill, "radius": p.radius, "salt": p.salt,
         "amplitude": p.amplitude}
        for p in cfg.pattern.primitives
        if isinstance(p, SpeckleDots)
    ]
    return {
        "z_focus": cfg.z_focus,
        "z_start": cfg.z_start,
        "sigma0": cfg.sigma0,
        "blur_coeff": cfg.blur_coeff,
        "drift_coeff": list(cfg.drift_coeff),
        "noise_snr": cfg.noise_snr,
        "point_cap": cfg.point_cap,
        "seed": cfg.seed,
        "limits": {
            "x": [cfg.x_limits.lo, cfg.x_limits.hi],
            "y": [cfg.y_limits.lo, cfg.y_limits.hi],
            "z": [cfg.z_limits.lo, cfg.z_limits.hi],
        },
        "pattern": {
            "background": cfg.pattern.background,
            "feature": cfg.pattern.feature,
            "stars": stars,
            "grids": grids,
            "speckles": speckles,
        },
    }
