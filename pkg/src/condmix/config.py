"""Run configuration: flat key-value files, validation, bundled presets."""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field, fields
from pathlib import Path

from .loss import LossWeights
from .optimize import DEFAULT_HIDDEN, TrainConfig, VARIANTS
from .problems import EXAMPLE_IDS, ProblemInstance, make_example


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything one reconstruction run needs, resolvable to a problem
    instance plus a training configuration."""

    example: str
    variant: str = "neumann"
    delta: float = 0.0
    gamma_sigma: float = 10.0
    gamma_b: float = 10.0
    gamma_q: float = 1e-5
    gamma_tv: float = 0.0
    n_r: int = 40000
    n_b: int = 4000
    n_data: int | None = None
    lr: float = 2e-3
    dr: float = 0.7
    step: int = 2000
    epochs: int = 60000
    seed: int = 0
    trace_interval: int = 100
    q_hidden: tuple[int, ...] = DEFAULT_HIDDEN
    sigma_hidden: tuple[int, ...] = DEFAULT_HIDDEN
    tv_epsilon: float = 1e-6
    export_resolution: int | None = None
    out_dir: str | None = None

    def validate(self) -> "RunConfig":
        if self.example not in EXAMPLE_IDS:
            raise ConfigError(f"unknown example: {self.example!r}")
        if self.variant not in VARIANTS and self.variant != "partial":
            raise ConfigError(f"unknown variant: {self.variant!r}")
        problem = make_example(self.example)
        if self.variant == "partial" and not problem.is_partial:
            raise ConfigError("variant 'partial' needs an example with a data region")
        if self.variant == "neumann" and problem.bc_kind != "neumann":
            raise ConfigError(f"example {self.example} is not a Neumann problem")
        if self.variant.startswith("dirichlet") and problem.bc_kind != "dirichlet":
            raise ConfigError(f"example {self.example} is not a Dirichlet problem")
        for key in ("gamma_sigma", "gamma_b", "gamma_q", "gamma_tv", "delta"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be nonnegative")
        if self.lr <= 0 or not (0 < self.dr <= 1):
            raise ConfigError("require lr > 0 and 0 < dr <= 1")
        if min(self.step, self.epochs, self.n_r, self.n_b, self.trace_interval) < 1:
            raise ConfigError("step, epochs, n_r, n_b, trace_interval must be >= 1")
        if self.n_data is not None and self.n_data < 1:
            raise ConfigError("n_data must be >= 1 when given")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.export_resolution is not None and self.export_resolution < 2:
            raise ConfigError("export_resolution must be >= 2")
        if self.tv_epsilon <= 0:
            raise ConfigError("tv_epsilon must be positive")
        if any(w < 1 for w in tuple(self.q_hidden) + tuple(self.sigma_hidden)):
            raise ConfigError("hidden widths must be >= 1")
        return self

    def to_problem(self) -> ProblemInstance:
        return make_example(self.example)

    def to_train_config(self) -> TrainConfig:
        variant = self.variant
        if variant == "partial":
            variant = "neumann"
        return TrainConfig(
            lr0=self.lr,
            dr=self.dr,
            step=self.step,
            epochs=self.epochs,
            seed=self.seed,
            n_r=self.n_r,
            n_b=self.n_b,
            weights=LossWeights(self.gamma_sigma, self.gamma_b, self.gamma_q, self.gamma_tv),
            q_hidden=tuple(self.q_hidden),
            sigma_hidden=tuple(self.sigma_hidden),
            delta=self.delta,
            variant=variant,
            trace_interval=self.trace_interval,
            tv_epsilon=self.tv_epsilon,
            n_data=self.n_data,
        )


_INT_KEYS = {"n_r", "n_b", "n_data", "step", "epochs", "seed", "trace_interval", "export_resolution"}
_FLOAT_KEYS = {"delta", "gamma_sigma", "gamma_b", "gamma_q", "gamma_tv", "lr", "dr", "tv_epsilon"}
_STR_KEYS = {"example", "variant", "out_dir"}
_LIST_KEYS = {"q_hidden", "sigma_hidden"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _LIST_KEYS


def _parse_scalar(text: str):
    text = text.strip()
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse value: {text!r}")


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, rhs = line.partition("=")
        key = key.strip()
        rhs = rhs.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if key in _LIST_KEYS:
            if not (rhs.startswith("[") and rhs.endswith("]")):
                raise ConfigError(f"{source}:{lineno}: {key} expects a list [..]")
            items = [s for s in rhs[1:-1].split(",") if s.strip()]
            values[key] = tuple(int(s.strip()) for s in items)
            continue
        value = _parse_scalar(rhs)
        if key in _INT_KEYS:
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{source}:{lineno}: {key} expects an integer")
        elif key in _FLOAT_KEYS:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{source}:{lineno}: {key} expects a number")
            value = float(value)
        elif key in _STR_KEYS and not isinstance(value, str):
            raise ConfigError(f"{source}:{lineno}: {key} expects a string")
        values[key] = value
    if "example" not in values:
        raise ConfigError(f"{source}: missing required key 'example'")
    if "variant" not in values:
        example = values["example"]
        values["variant"] = "neumann" if example.startswith(("neu", "discon")) else "dirichlet-fluxbc"
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:  # pragma: no cover
        raise ConfigError(str(exc))
    return cfg.validate()


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), source=str(path))


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if f.name in _LIST_KEYS:
            lines.append(f"{f.name} = [{', '.join(str(int(v)) for v in value)}]")
        elif isinstance(value, str):
            lines.append(f'{f.name} = "{value}"')
        elif isinstance(value, bool):
            lines.append(f"{f.name} = {'true' if value else 'false'}")
        elif isinstance(value, int):
            lines.append(f"{f.name} = {value}")
        else:
            lines.append(f"{f.name} = {value!r}")
    return "\n".join(lines) + "\n"


def write_config(path, cfg: RunConfig) -> None:
    Path(path).write_text(serialize_config(cfg))


def bundled_config_names() -> list[str]:
    root = importlib.resources.files("condmix") / "configs"
    return sorted(p.name[: -len(".toml")] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_config(name_or_path) -> RunConfig:
    """Accept a filesystem path or the name of a bundled preset."""
    path = Path(name_or_path)
    if path.exists():
        return parse_config(path)
    resource = importlib.resources.files("condmix") / "configs" / f"{name_or_path}.toml"
    if resource.is_file():
        return parse_config_text(resource.read_text(), source=f"bundled:{name_or_path}")
    raise ConfigError(
        f"config {name_or_path!r} is neither a file nor a bundled preset "
        f"(available: {', '.join(bundled_config_names())})"
    )
