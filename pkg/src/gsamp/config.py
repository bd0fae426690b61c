"""Plain-text run configuration.

The file is a list of ``key = value`` lines. Lines before the first section
header set run-level options; each ``[estimator NAME]`` header opens one
estimator entry. ``#`` starts a comment. Every key is checked against
:data:`RUN_SCHEMA` or :data:`ESTIMATOR_SCHEMA` and unknown keys are
rejected with their line number::

    k = 5
    observed = 40
    alpha = 1.3
    gamma = 0.1

    [estimator GSAMP (sum)]
    kind = gsamp
    aggregator = sum
    weights = 1, 0, 2, 0
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

from .errors import ConfigError, ValidationError
from .experiment import REFERENCE_NOISE, EstimatorConfig, RunConfig, reference_estimators
from .noise import SasParams


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _opt(parse: Callable) -> Callable:
    def inner(text: str):
        return None if text.strip().lower() in ("", "none", "auto") else parse(text)

    return inner


def _weights(text: str) -> tuple:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError(f"expected four comma-separated weights, got {len(parts)}")
    return tuple(float(p) for p in parts)


def _noise_grid(text: str) -> tuple:
    """``alpha:gamma`` pairs separated by commas."""
    out = []
    for item in text.split(","):
        a, sep, g = item.partition(":")
        if not sep:
            raise ValueError(f"noise setting {item.strip()!r} is not alpha:gamma")
        out.append(SasParams(float(a), float(g)))
    return tuple(out)


def _choice(*options: str) -> Callable:
    def inner(text: str) -> str:
        t = text.strip().lower()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text.strip()!r}")
        return t

    return inner


RUN_SCHEMA: dict[str, Callable] = {
    "k": int,
    "observed": _opt(int),
    "bandwidth": _opt(int),
    "alpha": float,
    "gamma": float,
    "location": float,
    "trials": int,
    "seed": int,
    "cutoff": float,
    "khop": int,
    "estimators": _choice("reference", "literal"),
    "noise_grid": _noise_grid,
    "synthetic_nodes": int,
    "synthetic_steps": int,
    "synthetic_amplitude": float,
}

ESTIMATOR_SCHEMA: dict[str, Callable] = {
    "kind": _choice(*EstimatorConfig.KINDS),
    "mode": _choice("lms", "sign", "auto"),
    "aggregator": _choice("sum", "median", "smooth"),
    "weights": _weights,
    "normalize": _bool,
    "include_self": _bool,
    "step_size": _opt(float),
    "cheb_order": int,
    "cheb_damping": _choice("none", "jackson"),
    "guard": _bool,
}

_SECTION = re.compile(r"^\[\s*estimator\s+(?P<name>[^\]]+?)\s*\]$")


@dataclass
class CliConfig:
    """Parsed configuration: a :class:`RunConfig` plus harness extras."""

    run: RunConfig = field(default_factory=RunConfig)
    noise_grid: tuple = REFERENCE_NOISE
    synthetic_nodes: int = 60
    synthetic_steps: int = 95
    synthetic_amplitude: float = 1.0
    source: str | None = None


def parse_config(text: str, source: str = "<config>") -> CliConfig:
    """Parse and validate; all problems are collected into one ConfigError."""
    errors: list[str] = []
    run_values: dict = {}
    sections: list[tuple[str, int, dict]] = []
    current: dict | None = None
    run_seen: set[str] = set()
    section_seen: list[set[str]] = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            m = _SECTION.match(line)
            if not m:
                errors.append(f"{source}:{line_no}: bad section header {line!r} (expected [estimator NAME])")
                current = None
                continue
            current = {}
            section_seen.append(set())
            sections.append((m.group("name"), line_no, current))
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            errors.append(f"{source}:{line_no}: expected 'key = value', got {line!r}")
            continue
        schema = RUN_SCHEMA if current is None else ESTIMATOR_SCHEMA
        where = "run options" if current is None else "estimator sections"
        if key not in schema:
            errors.append(f"{source}:{line_no}: unknown key {key!r} in {where}")
            continue
        target = run_values if current is None else current
        seen_keys = run_seen if current is None else section_seen[-1]
        if key in seen_keys:
            errors.append(f"{source}:{line_no}: duplicate key {key!r}")
            continue
        seen_keys.add(key)
        try:
            target[key] = (schema[key](value.strip()), line_no)
        except (ValueError, ValidationError) as exc:
            errors.append(f"{source}:{line_no}: {key}: {exc}")

    estimators = []
    seen = set()
    for name, line_no, values in sections:
        if name in seen:
            errors.append(f"{source}:{line_no}: duplicate estimator {name!r}")
            continue
        seen.add(name)
        if "kind" not in values:
            errors.append(f"{source}:{line_no}: estimator {name!r} needs a 'kind'")
            continue
        kwargs = {k: v for k, (v, _) in values.items()}
        if kwargs.get("cheb_damping") == "none":
            kwargs["cheb_damping"] = None
        try:
            estimators.append(EstimatorConfig(name=name, **kwargs))
        except ValidationError as exc:
            errors.append(f"{source}:{line_no}: {exc}")

    values = {k: v for k, (v, _) in run_values.items()}
    if estimators and "estimators" in values:
        errors.append(f"{source}:{run_values['estimators'][1]}: 'estimators' preset conflicts with [estimator] sections")
    if errors:
        raise ConfigError(errors)

    if not estimators:
        estimators = reference_estimators(literal=values.pop("estimators", "reference") == "literal")
    values.pop("estimators", None)

    extras = {f.name for f in fields(CliConfig)} - {"run", "source"}
    cli_kwargs = {k: values.pop(k) for k in list(values) if k in extras}
    noise_keys = {k: values.pop(k) for k in ("alpha", "gamma", "location") if k in values}
    try:
        defaults = RunConfig().noise
        noise = SasParams(
            noise_keys.get("alpha", defaults.alpha),
            noise_keys.get("gamma", defaults.gamma),
            noise_keys.get("location", defaults.mu),
        )
        run = RunConfig(noise=noise, estimators=tuple(estimators), **values)
        cfg = CliConfig(run=run, source=source, **cli_kwargs)
    except ValidationError as exc:
        raise ConfigError([f"{source}: {exc}"]) from None
    if cfg.synthetic_steps < 2:
        raise ConfigError([f"{source}: synthetic_steps must be >= 2"])
    return cfg


def load_config(path) -> CliConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError([f"{p}: cannot read config: {exc.strerror or exc}"]) from None
    return parse_config(text, source=str(p))


def dump_config(cfg: CliConfig) -> str:
    """Render a config that :func:`parse_config` reads back to the same values."""
    r = cfg.run
    lines = [
        f"k = {r.k}",
        f"observed = {'auto' if r.observed is None else r.observed}",
        f"bandwidth = {'auto' if r.bandwidth is None else r.bandwidth}",
        f"alpha = {r.noise.alpha!r}",
        f"gamma = {r.noise.gamma!r}",
        f"location = {r.noise.mu!r}",
        f"trials = {r.trials}",
        f"seed = {r.seed}",
        f"cutoff = {r.cutoff!r}",
        f"khop = {r.khop}",
        "noise_grid = " + ", ".join(f"{p.alpha!r}:{p.gamma!r}" for p in cfg.noise_grid),
        f"synthetic_nodes = {cfg.synthetic_nodes}",
        f"synthetic_steps = {cfg.synthetic_steps}",
        f"synthetic_amplitude = {cfg.synthetic_amplitude!r}",
    ]
    for e in r.estimators:
        lines += [
            "",
            f"[estimator {e.name}]",
            f"kind = {e.kind}",
            f"mode = {e.mode}",
            f"aggregator = {e.aggregator}",
            "weights = " + ", ".join(repr(w) for w in e.weights),
            f"normalize = {str(e.normalize).lower()}",
            f"include_self = {str(e.include_self).lower()}",
            f"step_size = {'auto' if e.step_size is None else repr(e.step_size)}",
            f"cheb_order = {e.cheb_order}",
            f"cheb_damping = {e.cheb_damping or 'none'}",
            f"guard = {str(e.guard).lower()}",
        ]
    return "\n".join(lines) + "\n"
