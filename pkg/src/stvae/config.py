"""Training configuration and its flat ``key = value`` file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .autodiff import ActivationKind
from .data import IsingConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    prior: str
    encoder_layers: tuple[int, ...]
    decoder_layers: tuple[int, ...]
    activation: str
    lr: float
    batch_size: int
    epochs: int
    seed: int = 0
    val_fraction: float = 0.2
    nu_min: float = 0.5
    kl_mc_samples: int = 4
    kl_weight: float = 1.0
    masking: IsingConfig | None = None
    # 0 means "use every image in the file"
    train_images: int = 0
    test_images: int = 0
    eval_seed: int = 1

    def __post_init__(self):
        if self.prior not in ("gaussian", "student_t"):
            raise ConfigError(f"prior must be 'gaussian' or 'student_t', got {self.prior!r}")
        try:
            ActivationKind(self.activation)
        except ValueError:
            raise ConfigError(f"unknown activation {self.activation!r}") from None
        if not self.encoder_layers or not self.decoder_layers:
            raise ConfigError("encoder_layers and decoder_layers must be non-empty")
        if any(n < 1 for n in self.encoder_layers + self.decoder_layers):
            raise ConfigError("layer sizes must be >= 1")
        if self.decoder_layers[0] != self.encoder_layers[-1]:
            raise ConfigError(f"decoder_layers[0]={self.decoder_layers[0]} must equal the latent size "
                              f"encoder_layers[-1]={self.encoder_layers[-1]}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        for name in ("batch_size", "epochs", "kl_mc_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in (0, 1)")
        if self.nu_min < 0:
            raise ConfigError("nu_min must be non-negative")
        if not 0 <= self.seed < 2**64 or not 0 <= self.eval_seed < 2**64:
            raise ConfigError("seeds must be unsigned 64-bit integers")

    @property
    def latent_dim(self) -> int:
        return self.encoder_layers[-1]

    def replace(self, **changes) -> TrainConfig:
        return dataclasses.replace(self, **changes)


_ORDER = (
    "prior", "encoder_layers", "decoder_layers", "activation", "lr", "batch_size", "epochs",
    "seed", "val_fraction", "nu_min", "kl_mc_samples", "kl_weight", "masking", "mask_coupling",
    "mask_field", "mask_sweeps", "mask_target_fraction", "train_images", "test_images", "eval_seed",
)
_REQUIRED = ("prior", "encoder_layers", "decoder_layers", "activation", "lr", "batch_size", "epochs")
_INT = {"batch_size", "epochs", "seed", "kl_mc_samples", "mask_sweeps", "train_images",
        "test_images", "eval_seed"}
_FLOAT = {"lr", "val_fraction", "nu_min", "kl_weight", "mask_coupling", "mask_target_fraction"}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _parse_value(key: str, raw: str, lineno: int):
    try:
        if key in ("encoder_layers", "decoder_layers"):
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if key in _INT:
            return int(raw, 0)
        if key in _FLOAT:
            return float(raw)
        if key == "masking":
            low = raw.lower()
            if low in _TRUE | _FALSE:
                return low in _TRUE
            raise ValueError(raw)
        if key == "mask_field":
            return None if raw.lower() == "auto" else float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from None


def parse_config(text: str) -> TrainConfig:
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _ORDER:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw, lineno)
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    mask_keys = {k: values.pop(k) for k in list(values) if k.startswith("mask_")}
    masking = None
    if values.pop("masking", False):
        defaults = IsingConfig()
        masking = IsingConfig(
            coupling=mask_keys.get("mask_coupling", defaults.coupling),
            external_field=mask_keys.get("mask_field", defaults.external_field),
            sweeps=mask_keys.get("mask_sweeps", defaults.sweeps),
            target_fraction=mask_keys.get("mask_target_fraction", defaults.target_fraction),
        )
    elif mask_keys:
        raise ConfigError(f"{', '.join(mask_keys)} given but masking is off")
    return TrainConfig(masking=masking, **values)


def format_config(cfg: TrainConfig) -> str:
    """Canonical text form; ``parse_config(format_config(c)) == c``."""
    lines = [
        f"prior = {cfg.prior}",
        f"encoder_layers = {', '.join(map(str, cfg.encoder_layers))}",
        f"decoder_layers = {', '.join(map(str, cfg.decoder_layers))}",
        f"activation = {cfg.activation}",
        f"lr = {cfg.lr!r}",
        f"batch_size = {cfg.batch_size}",
        f"epochs = {cfg.epochs}",
        f"seed = {cfg.seed}",
        f"val_fraction = {cfg.val_fraction!r}",
        f"nu_min = {cfg.nu_min!r}",
        f"kl_mc_samples = {cfg.kl_mc_samples}",
        f"kl_weight = {cfg.kl_weight!r}",
    ]
    if cfg.masking is None:
        lines.append("masking = false")
    else:
        m = cfg.masking
        lines += [
            "masking = true",
            f"mask_coupling = {m.coupling!r}",
            f"mask_field = {'auto' if m.external_field is None else repr(m.external_field)}",
            f"mask_sweeps = {m.sweeps}",
            f"mask_target_fraction = {m.target_fraction!r}",
        ]
    lines += [
        f"train_images = {cfg.train_images}",
        f"test_images = {cfg.test_images}",
        f"eval_seed = {cfg.eval_seed}",
    ]
    return "\n".join(lines) + "\n"


def load_config(path) -> TrainConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def preset_names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("stvae.presets").iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> TrainConfig:
    res = resources.files("stvae.presets") / f"{name}.cfg"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return parse_config(res.read_text(encoding="utf-8"))
