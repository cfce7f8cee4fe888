"""Configuration loader for CTC model files."""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from src.config import WORKERS
from src.ctc_generator import ModelConfig, resolve_involution
from src.degree_model import DegreeDistribution
from src.errors import ConfigError, CtcError
from src.io_formats import parse_inline_pmf, read_degree_sequence, read_pmf

logger = logging.getLogger(__name__)

KNOWN_KEYS = (
    "c", "n_i", "b", "q", "r", "a", "h", "gamma", "kmin", "kmax",
    "seed", "degrees", "pmf", "strict", "workers",
)
TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off")


class ConfigLoader:
    """Loads and validates a flat model configuration.

    ``key=value`` text is the canonical format; files ending in .yaml/.yml
    are read as a flat YAML mapping instead.
    """

    def __init__(self, config_path: str):
        """Initialize config loader.

        Args:
            config_path: Path to the key=value or YAML configuration file
        """
        self.config_path = Path(config_path)
        self.config: Optional[Dict[str, Any]] = None
        self.load()

    def load(self) -> Dict[str, Any]:
        """Load configuration from file."""
        if not self.config_path.exists():
            raise ConfigError(f"Config file not found: {self.config_path}", key="config")

        text = self.config_path.read_text()
        if self.config_path.suffix.lower() in (".yaml", ".yml"):
            try:
                data = yaml.safe_load(text) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"{self.config_path}: invalid YAML ({e})", key="config")
            if not isinstance(data, dict):
                raise ConfigError(f"{self.config_path}: expected a flat mapping", key="config")
            self.config = {str(k): v for k, v in data.items()}
        else:
            self.config = self._parse_key_values(text)

        self._validate()
        return self.config

    def _parse_key_values(self, text: str) -> Dict[str, str]:
        values: Dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{self.config_path}:{lineno}: expected key=value, got {raw.strip()!r}", key="config")
            key = key.strip()
            if key in values:
                raise ConfigError(f"set twice in {self.config_path}", key=key)
            values[key] = value.strip()
        return values

    def _validate(self):
        """Reject unknown keys, nested values and files without a degree source."""
        for key, value in self.config.items():
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown key; expected one of {', '.join(KNOWN_KEYS)}", key=key)
            if isinstance(value, dict):
                raise ConfigError("nested values are not supported", key=key)
        if not any(self.config.get(k) not in (None, "") for k in ("degrees", "pmf", "gamma")):
            raise ConfigError("no degree source: give degrees, pmf or gamma", key="gamma")

    def get(self, key: str, default: Any = None) -> Any:
        """Get a raw configuration value."""
        value = self.config.get(key, default)
        return default if value == "" else value

    def get_int(self, key: str, default: Optional[int] = None) -> Optional[int]:
        value = self.get(key)
        if value is None:
            return default
        try:
            return int(str(value).strip())
        except ValueError:
            raise ConfigError(f"expected an integer, got {value!r}", key=key)

    def get_float(self, key: str, default: Optional[float] = None) -> Optional[float]:
        value = self.get(key)
        if value is None:
            return default
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"expected a number, got {value!r}", key=key)

    def get_bool(self, key: str, default: bool = False) -> bool:
        value = self.get(key)
        if value is None:
            return default
        if isinstance(value, bool):
            return value
        word = str(value).strip().lower()
        if word in TRUE_WORDS:
            return True
        if word in FALSE_WORDS:
            return False
        raise ConfigError(f"expected true or false, got {value!r}", key=key)

    def get_int_list(self, key: str) -> Optional[List[int]]:
        value = self.get(key)
        if value is None:
            return None
        items = value if isinstance(value, list) else str(value).split(",")
        try:
            return [int(str(x).strip()) for x in items if str(x).strip()]
        except ValueError:
            raise ConfigError(f"expected a comma list of integers, got {value!r}", key=key)

    def get_h(self):
        value = self.get("h")
        if value is None or isinstance(value, list):
            return value
        text = str(value).strip()
        return text if text.replace(" ", "").replace(",", "").isalpha() else self.get_int_list("h")

    def get_workers(self) -> int:
        return self.get_int("workers", WORKERS)

    def resolve_path(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self.config_path.parent / path

    def get_degree_lists(self) -> Optional[Tuple[Tuple[int, ...], ...]]:
        value = self.get("degrees")
        if value is None:
            return None
        lists = read_degree_sequence(self.resolve_path(str(value)))
        return tuple(tuple(d) for d in lists)

    def get_pmf(self) -> Optional[DegreeDistribution]:
        value = self.get("pmf")
        if value is None:
            return None
        text = str(value)
        try:
            if ":" in text and not self.resolve_path(text).exists():
                return parse_inline_pmf(text)
            path = self.resolve_path(text)
            if not path.exists():
                raise ConfigError(f"pmf file not found: {path}", key="pmf")
            return read_pmf(path)
        except ConfigError:
            raise
        except CtcError as e:
            raise ConfigError(str(e), key="pmf")

    def to_model_config(self, **overrides) -> ModelConfig:
        """Build the validated ModelConfig; keyword overrides win over the file."""
        degree_lists = self.get_degree_lists()
        c = self.get_int("c", len(degree_lists) if degree_lists else 1)
        n_i = self.get_int_list("n_i")
        if n_i is None:
            if degree_lists is None:
                raise ConfigError("community sizes are required without a degree file", key="n_i")
            n_i = [len(d) for d in degree_lists]
        elif len(n_i) == 1 and c > 1:
            n_i = n_i * c

        b = self.get_int("b", 1)
        if b < 1:
            raise ConfigError(f"must be >= 1, got {b}", key="b")
        h = self.get_h()
        images = () if h is None else tuple((resolve_involution(h, b) + 1).tolist())
        fields = dict(
            c=c,
            n_i=tuple(n_i),
            b=b,
            q=self.get_float("q", 0.0),
            r=self.get_float("r", 1.0),
            a=self.get_float("a", 0.0),
            h=images,
            seed=self.get_int("seed"),
            gamma=self.get_float("gamma"),
            kmin=self.get_int("kmin", 1),
            kmax=self.get_int("kmax"),
            pmf=self.get_pmf(),
            degree_lists=degree_lists,
            strict=self.get_bool("strict", False),
        )
        fields.update({k: v for k, v in overrides.items() if v is not None})
        config = ModelConfig(**fields)
        logger.debug(f"Loaded {self.config_path}: source={config.degree_source}, n={config.n}, b={config.b}")
        return config
