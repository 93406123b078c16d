"""Model/training configuration and the plain-text ``key = value`` config format."""

from dataclasses import dataclass, field, fields, replace

DDM_VARIANTS = ("full", "spatial_only", "frequency_only", "dual_branch")


class ConfigError(ValueError):
    """Invalid configuration; carries the offending line number when parsed from text."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class ModelConfig:
    channels: int = 3
    n_kernels: int = 5
    kernel_size: int = 5
    widths: tuple = (16, 32, 64)
    predictor_width: int = 16
    dilation_width: int = 16
    d_min: float = 0.5
    d_max: float = 8.0
    window: int = 8
    ddm_variant: str = "full"
    disable_pac: bool = False
    disable_dikp: bool = False
    identity: bool = False

    @property
    def feature_channels(self):
        return 2 * self.n_kernels * self.channels

    def validate(self):
        if self.n_kernels < 1:
            raise ConfigError("n_kernels must be >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError("kernel_size must be odd")
        if self.ddm_variant not in DDM_VARIANTS:
            raise ConfigError(f"ddm_variant must be one of {DDM_VARIANTS}")
        if not 0 < self.d_min < self.d_max:
            raise ConfigError("need 0 < d_min < d_max")
        if len(self.widths) != 3:
            raise ConfigError("widths must list three encoder widths")


@dataclass
class TrainConfig:
    seed: int = 0
    train_dir: str = ""
    val_dir: str = ""
    out_dir: str = "run"
    steps: int = 2000
    phase2_start: float = 0.8
    patch1: int = 64
    batch1: int = 2
    patch2: int = 96
    batch2: int = 1
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    milestones: tuple = (0.6, 0.85)
    gamma: float = 0.5
    lambda1: float = 1.0
    lambda2: float = 0.2
    lambda3: float = 0.1
    alpha: float = 1.0
    beta: float = 0.2
    gamma_freq: float = 0.2
    swa_every: int = 20
    val_every: int = 250
    val_limit: int = 0
    log_every: int = 10
    augment: bool = True
    dtype: str = "float32"
    kernel_sweep: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)

    def milestone_steps(self):
        return [int(round(m * self.steps)) if m < 1 else int(m) for m in self.milestones]

    def validate(self):
        self.model.validate()
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.kernel_sweep and self.model.n_kernels != self.model.kernel_size:
            raise ConfigError("kernel sweep requires n_kernels == kernel_size")
        for name in ("lambda1", "lambda2", "lambda3", "alpha", "beta", "gamma_freq"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if list(self.milestones) != sorted(self.milestones):
            raise ConfigError("milestones must be ascending")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")


# -- key = value text format -----------------------------------------------------------

_MODEL_KEYS = {f.name for f in fields(ModelConfig)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"model"}


def _coerce(raw, template):
    if isinstance(template, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    if isinstance(template, tuple):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        kind = type(template[0]) if template else float
        return tuple(kind(s) for s in items)
    return raw


def parse_config(text, base=None, extra_keys=()):
    """Parse ``key = value`` lines onto a TrainConfig. ``#`` starts a comment.

    Keys from ModelConfig may be given bare or as ``model.<key>``. Keys listed in
    ``extra_keys`` are returned separately in a dict (used by the CLI, e.g. ``count``).
    """
    cfg = replace(base or TrainConfig())
    cfg.model = replace(cfg.model)
    extras = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        bare = key[len("model."):] if key.startswith("model.") else key
        try:
            if key in extra_keys:
                extras[key] = raw
            elif bare in _MODEL_KEYS and (key.startswith("model.") or key not in _TRAIN_KEYS):
                setattr(cfg.model, bare, _coerce(raw, getattr(cfg.model, bare)))
            elif key in _TRAIN_KEYS:
                setattr(cfg, key, _coerce(raw, getattr(cfg, key)))
            else:
                raise ConfigError(f"unknown key {key!r}", lineno)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from exc
    return cfg, extras


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg):
    lines = [f"{f.name} = {_fmt(getattr(cfg, f.name))}" for f in fields(TrainConfig) if f.name != "model"]
    lines += [f"model.{f.name} = {_fmt(getattr(cfg.model, f.name))}" for f in fields(ModelConfig)]
    return "\n".join(lines) + "\n"


def config_dict(cfg):
    out = {f.name: getattr(cfg, f.name) for f in fields(TrainConfig) if f.name != "model"}
    out["model"] = {f.name: getattr(cfg.model, f.name) for f in fields(ModelConfig)}
    return out


def config_from_dict(data):
    """Inverse of ``config_dict``; unknown keys raise ConfigError."""
    data = dict(data)
    model_data = data.pop("model", {}) or {}
    text = []
    for key, value in data.items():
        text.append(f"{key} = {_fmt(tuple(value) if isinstance(value, list) else value)}")
    for key, value in model_data.items():
        text.append(f"model.{key} = {_fmt(tuple(value) if isinstance(value, list) else value)}")
    return parse_config("\n".join(text))[0]
