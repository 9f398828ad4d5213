"""Run configuration: defaults, `key=value` config files, range syntax and validation.

Values are layered as built-in defaults < config file < command-line flags.
"""
import logging
import math
import os
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import fields
from dataclasses import replace
from pathlib import Path
from typing import Optional

from util.galois import check_field_parameters
from util.galois import DEFAULT_FIELD_CAP
from util.galois import PrimePoly
from util.recovery import DEFAULT_NOISY_SPARSITY
from util.recovery import DEFAULT_SNR_GRID
from util.rng import DEFAULT_SEED
from util.sensing import ConstructionSpec

logger = logging.getLogger("additive_cs.util.config")

FIELD_CAP_ENV = "ADDITIVE_CS_FIELD_CAP"
COMMANDS = ("build", "verify", "spectra", "recover", "recover-noisy", "sequence")
MAX_SEED = 2**64

# Written into manifests for the record; ignored when a manifest is read back as a config file.
INFO_KEYS = frozenset({"version", "command", "K", "N", "kind", "modulus"})


class ConfigError(ValueError):
    pass


def parse_int_range(text: str) -> tuple:
    """Parse `a..b`, `a..b:step` or comma lists of either into a tuple of ints.

    :param text: The range expression, e.g. "1..10", "5..40:5" or "1,2,3"
    :return: The integers, in the order given
    """
    values = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        try:
            if ".." in item:
                bounds, _, step = item.partition(":")
                start, stop = (int(v) for v in bounds.split(".."))
                step = int(step) if step else 1
                if step < 1:
                    raise ConfigError(f"Range step must be positive in '{item}'")
                values.extend(range(start, stop + 1, step))
            else:
                values.append(int(item))
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Cannot parse '{item}' as an integer range") from e
    if not values:
        raise ConfigError(f"Empty range '{text}'")
    return tuple(values)


def parse_snr_grid(text: str) -> tuple:
    """Like parse_int_range() but for SNR values in dB, where `inf` means noiseless."""
    values = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        try:
            if ".." in item:
                bounds, _, step = item.partition(":")
                start, stop = (float(v) for v in bounds.split(".."))
                step = float(step) if step else 1.0
                if step <= 0.0 or math.isinf(stop):
                    raise ConfigError(f"Bad SNR range '{item}'")
                count = int(math.floor((stop - start) / step + 1e-9)) + 1
                values.extend(start + i * step for i in range(max(count, 0)))
            else:
                values.append(float(item))
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Cannot parse '{item}' as an SNR grid") from e
    if not values or any(math.isnan(v) for v in values):
        raise ConfigError(f"Invalid SNR grid '{text}'")
    return tuple(values)


def format_int_range(values: tuple) -> str:
    return ",".join(str(v) for v in values)


def format_snr_grid(values: tuple) -> str:
    return ",".join("inf" if math.isinf(v) else f"{v:g}" for v in values)


def _parse_bool(text: str) -> bool:
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"Cannot parse '{text}' as a boolean")


def default_field_cap() -> int:
    value = os.environ.get(FIELD_CAP_ENV)
    if not value:
        return DEFAULT_FIELD_CAP
    try:
        return int(value)
    except ValueError as e:
        raise ConfigError(f"{FIELD_CAP_ENV} must be an integer, got '{value}'") from e


@dataclass(frozen=True)
class RunConfig:
    command: str = "build"
    p: int = 3
    m: int = 4
    h: int = 2
    d: int = 2
    exponents: tuple = (1, 2)
    seed: int = DEFAULT_SEED
    trials: int = 2000
    s_range: tuple = tuple(range(1, 11))
    snr_grid: tuple = DEFAULT_SNR_GRID
    max_iterations: int = 100
    out: str = "results"
    poly: Optional[str] = None
    lazy: bool = False
    coefficient: int = 1
    workers: Optional[int] = None
    bust_cache: bool = False
    trial_log: bool = False
    matrix_csv: bool = False

    @property
    def spec(self) -> ConstructionSpec:
        return ConstructionSpec(p=self.p, m=self.m, h=self.h, d=self.d, exponents=self.exponents)

    @property
    def out_path(self) -> Path:
        return Path(self.out)

    def validate(self) -> "RunConfig":
        """Check every parameter before any work starts; raises a ValueError subclass."""
        if self.command not in COMMANDS:
            raise ConfigError(f"Unknown command '{self.command}'")
        check_field_parameters(self.p, self.m, default_field_cap())
        K = self.p**self.m
        if self.command == "sequence":
            if not 0 <= self.coefficient < K:
                raise ConfigError(f"b={self.coefficient} is not an element of GF({K})")
            r = self.exponents[0]
            if r < 1 or r % self.p == 0:
                raise ConfigError(f"r={r} must be positive and prime to {self.p}")
        else:
            spec = self.spec
        if not 0 <= self.seed < MAX_SEED:
            raise ConfigError(f"Seed {self.seed} must lie in [0, 2^64)")
        if self.trials < 1:
            raise ConfigError(f"trials must be at least 1, got {self.trials}")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iter must be at least 1, got {self.max_iterations}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.poly is not None:
            poly = PrimePoly.parse(self.p, self.poly)
            if poly.degree != self.m:
                raise ConfigError(f"Polynomial {poly} has degree {poly.degree}, expected {self.m}")
        if self.command in ("spectra", "recover", "recover-noisy"):
            low = 0 if self.command == "recover" else 1
            high = spec.K if self.command == "spectra" else spec.N
            for s in self.s_range:
                if not low <= s <= high:
                    raise ConfigError(f"s={s} is outside [{low}, {high}] for {self.command}")
        if self.command == "recover-noisy":
            for snr_db in self.snr_grid:
                if math.isinf(snr_db) and snr_db < 0:
                    raise ConfigError("An SNR of -inf dB leaves no signal to recover")
        return self

    def to_pairs(self) -> dict:
        """The config as `key=value` strings, in the format load_config_file() reads back."""
        values = asdict(self)
        pairs = {}
        for key, value in values.items():
            if key in ("command", "workers", "bust_cache", "trial_log", "matrix_csv"):
                continue
            if key in ("exponents", "s_range"):
                value = format_int_range(value)
            elif key == "snr_grid":
                value = format_snr_grid(value)
            elif value is None:
                continue
            pairs[FILE_KEYS_BY_FIELD.get(key, key)] = str(value).lower() if key == "lazy" else value
        return pairs


# Config file / flag names and the RunConfig fields they set
FIELD_BY_KEY = {
    "p": ("p", int),
    "m": ("m", int),
    "h": ("h", int),
    "d": ("d", int),
    "r": ("exponents", parse_int_range),
    "seed": ("seed", int),
    "trials": ("trials", int),
    "s": ("s_range", parse_int_range),
    "snr": ("snr_grid", parse_snr_grid),
    "max_iter": ("max_iterations", int),
    "out": ("out", str),
    "poly": ("poly", str),
    "lazy": ("lazy", _parse_bool),
    "b": ("coefficient", int),
    "workers": ("workers", int),
}
FILE_KEYS_BY_FIELD = {name: key for key, (name, _) in FIELD_BY_KEY.items()}


def load_config_file(path) -> dict:
    """Read a `key=value` file into RunConfig field values.

    Blank lines and `#` comments are skipped; manifest-only keys are ignored.

    :param path: The config or manifest file
    :return: dict of RunConfig field name to parsed value
    """
    values = {}
    with open(path) as config_file:
        for number, line in enumerate(config_file, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if not sep:
                raise ConfigError(f"{path}:{number}: expected key=value, got '{line}'")
            if key in INFO_KEYS:
                continue
            if key not in FIELD_BY_KEY:
                raise ConfigError(f"{path}:{number}: unknown key '{key}'")
            name, parse = FIELD_BY_KEY[key]
            try:
                values[name] = parse(raw)
            except ValueError as e:
                raise ConfigError(f"{path}:{number}: bad value for '{key}': {e}") from e
    logger.debug("Loaded %s settings from %s", len(values), path)
    return values


def from_sources(
    command: str, file_values: Optional[dict] = None, flag_values: Optional[dict] = None
) -> RunConfig:
    """Layer defaults, config file values and flags (None means "not given") into a RunConfig.

    When exponents are given without h or d, h defaults to their count and d to the last one.
    """
    merged = {}
    for source in (file_values or {}, flag_values or {}):
        merged.update({k: v for k, v in source.items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"Unknown settings: {sorted(unknown)}")
    if command == "recover-noisy":
        merged.setdefault("s_range", DEFAULT_NOISY_SPARSITY)
    if "exponents" in merged:
        merged.setdefault("h", len(merged["exponents"]))
        merged.setdefault("d", merged["exponents"][-1])
    return replace(RunConfig(), command=command, **merged)
