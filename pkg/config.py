"""
Configuration settings for the road-fatality forecaster
Centralizes file paths, defaults and limits, and resolves the per-run
configuration from defaults, a JSON config file and command-line flags
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from dotenv import load_dotenv

from data_handler import SCALERS, SPLIT_MODES, TARGET_MODES
from engines.cells import READOUT_INITS, VARIANTS
from engines.numkernel import ACTIVATIONS
from engines.training import OPTIMIZERS, TrainConfig
from model_constants import DEFAULT_SKIP_ROWS, TARGET_COLUMN, TableNames

load_dotenv()

# Get the project root directory
PROJECT_ROOT = Path(__file__).parent.absolute()

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class ConfigValidationError(Exception):
    """Custom exception for configuration validation errors"""
    pass


class Config:
    # Input tables exported from the DfT workbook
    COLLISIONS_CSV = os.getenv('COLLISIONS_CSV', PROJECT_ROOT / "data" / "collisions.csv")
    CASUALTIES_CSV = os.getenv('CASUALTIES_CSV', PROJECT_ROOT / "data" / "casualties.csv")
    VEHICLES_CSV = os.getenv('VEHICLES_CSV', PROJECT_ROOT / "data" / "vehicles.csv")

    # Artifacts and logs
    OUTPUT_DIR = os.getenv('OUTPUT_DIR', PROJECT_ROOT / "output")
    LOG_FILE = os.getenv('LOG_FILE')  # stream only when unset
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()

    # Reproducibility
    FORECAST_SEED = int(os.getenv('FORECAST_SEED', 42))

    # Model and data limits
    MAX_LOOKBACK = 30
    MAX_LAYERS = 4
    MAX_HIDDEN = 256
    MAX_EPOCHS = 100000
    MAX_AR_ORDER = 10
    MAX_AR_DIFF = 2

    @classmethod
    def validate_config(cls) -> bool:
        """Validate environment-level settings"""
        logger = logging.getLogger(__name__)
        errors = []

        if cls.LOG_LEVEL not in LOG_LEVELS:
            errors.append(f"LOG_LEVEL must be one of {LOG_LEVELS}, got {cls.LOG_LEVEL}")
        if cls.FORECAST_SEED < 0:
            errors.append("FORECAST_SEED must be non-negative")
        for name in ("COLLISIONS_CSV", "CASUALTIES_CSV", "VEHICLES_CSV"):
            if not Path(getattr(cls, name)).exists():
                errors.append(f"{name} not found: {getattr(cls, name)}")

        if errors:
            error_msg = "Configuration validation failed:\n" + "\n".join(f"  - {error}" for error in errors)
            logger.error(error_msg)
            raise ConfigValidationError(error_msg)

        logger.info("✅ Configuration validation passed")
        return True


@dataclass
class RunConfig:
    """Fully resolved configuration for one pipeline run."""
    collisions_csv: str = field(default_factory=lambda: str(Config.COLLISIONS_CSV))
    casualties_csv: str = field(default_factory=lambda: str(Config.CASUALTIES_CSV))
    vehicles_csv: str = field(default_factory=lambda: str(Config.VEHICLES_CSV))
    skip_rows: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_SKIP_ROWS))
    out_dir: str = field(default_factory=lambda: str(Config.OUTPUT_DIR))
    seed: int = field(default_factory=lambda: Config.FORECAST_SEED)

    # data framing
    target: str = TARGET_COLUMN
    paper_faithful: bool = False
    scaler: str = "robust"
    lookback: int = 5
    train_fraction: float = 0.8
    split: str = "chrono"
    target_mode: str = "change"

    # model
    variant: str = "lstm"
    layers: int = 2
    hidden: int = 32
    dropout: float = 0.2
    rho: str = "relu"
    freeze_regulation: bool = False
    readout_init: str = "zero"

    # training
    max_epochs: int = 500
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    rms_rho: float = 0.9
    patience: int = 20
    val_fraction: float = 0.2
    clip_norm: Optional[float] = 5.0
    optimizer: str = "adam"
    log_every: int = 50

    # baselines and analysis
    ar_order: int = 2
    ar_diff: int = 1
    ar_center: bool = True
    trend_window: int = 5

    @classmethod
    def from_sources(cls, config_path: Optional[str] = None,
                     overrides: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        """Defaults, then the JSON file, then flag overrides (None means unset)."""
        values: Dict[str, Any] = {}
        known = {f.name for f in fields(cls)}

        if config_path:
            try:
                with open(config_path, 'r', encoding='utf-8') as f:
                    loaded = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigValidationError(f"Cannot read config file {config_path}: {e}")
            if not isinstance(loaded, dict):
                raise ConfigValidationError(f"Config file {config_path} must hold a JSON object")
            unknown = sorted(set(loaded) - known)
            if unknown:
                raise ConfigValidationError(f"Unknown config keys in {config_path}: {unknown}")
            values.update(loaded)

        for key, value in (overrides or {}).items():
            if key not in known:
                raise ConfigValidationError(f"Unknown config override: {key}")
            if value is not None:
                values[key] = value

        try:
            cfg = cls(**values)
            cfg.skip_rows = {**DEFAULT_SKIP_ROWS, **{k: int(v) for k, v in cfg.skip_rows.items()}}
            cfg.validate()
        except (TypeError, ValueError, AttributeError) as e:
            raise ConfigValidationError(f"Invalid configuration value: {e}")
        return cfg

    def validate(self) -> bool:
        logger = logging.getLogger(__name__)
        errors = []

        if not (1 <= self.lookback <= Config.MAX_LOOKBACK):
            errors.append(f"lookback must be between 1 and {Config.MAX_LOOKBACK}")
        if not (1 <= self.layers <= Config.MAX_LAYERS):
            errors.append(f"layers must be between 1 and {Config.MAX_LAYERS}")
        if not (1 <= self.hidden <= Config.MAX_HIDDEN):
            errors.append(f"hidden must be between 1 and {Config.MAX_HIDDEN}")
        if not (1 <= self.max_epochs <= Config.MAX_EPOCHS):
            errors.append(f"max_epochs must be between 1 and {Config.MAX_EPOCHS}")
        if not (0.0 <= self.dropout < 1.0):
            errors.append("dropout must be in [0, 1)")
        if not (0.0 < self.train_fraction < 1.0):
            errors.append("train_fraction must be in (0, 1)")
        if not (0.0 < self.val_fraction < 1.0):
            errors.append("val_fraction must be in (0, 1)")
        if not self.learning_rate > 0:
            errors.append("learning_rate must be > 0")
        if self.patience < 1:
            errors.append("patience must be >= 1")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0 and 0.0 <= self.rms_rho < 1.0):
            errors.append("beta1, beta2 and rms_rho must be in [0, 1)")
        if not self.epsilon > 0:
            errors.append("epsilon must be > 0")
        if self.log_every < 1:
            errors.append("log_every must be >= 1")
        if self.seed < 0:
            errors.append("seed must be non-negative")
        if self.variant not in VARIANTS:
            errors.append(f"variant must be one of {VARIANTS}")
        if self.rho not in ACTIVATIONS:
            errors.append(f"rho must be one of {ACTIVATIONS}")
        if self.freeze_regulation and (self.variant != "sr" or self.rho != "relu"):
            errors.append("freeze_regulation requires variant 'sr' with rho 'relu'")
        if self.scaler not in SCALERS:
            errors.append(f"scaler must be one of {SCALERS}")
        if self.split not in SPLIT_MODES:
            errors.append(f"split must be one of {SPLIT_MODES}")
        if self.target_mode not in TARGET_MODES:
            errors.append(f"target_mode must be one of {TARGET_MODES}")
        if self.readout_init not in READOUT_INITS:
            errors.append(f"readout_init must be one of {READOUT_INITS}")
        if self.optimizer not in OPTIMIZERS:
            errors.append(f"optimizer must be one of {OPTIMIZERS}")
        if not (1 <= self.ar_order <= Config.MAX_AR_ORDER):
            errors.append(f"ar_order must be between 1 and {Config.MAX_AR_ORDER}")
        if not (0 <= self.ar_diff <= Config.MAX_AR_DIFF):
            errors.append(f"ar_diff must be between 0 and {Config.MAX_AR_DIFF}")
        if self.trend_window < 1:
            errors.append("trend_window must be >= 1")
        unknown_tables = sorted(set(self.skip_rows) - set(TableNames.ALL))
        if unknown_tables:
            errors.append(f"skip_rows has unknown tables: {unknown_tables}")
        if any(v < 0 for v in self.skip_rows.values()):
            errors.append("skip_rows must be non-negative")

        if errors:
            error_msg = "Configuration validation failed:\n" + "\n".join(f"  - {error}" for error in errors)
            logger.error(error_msg)
            raise ConfigValidationError(error_msg)
        return True

    def input_paths(self) -> Dict[str, str]:
        return {
            TableNames.COLLISIONS: self.collisions_csv,
            TableNames.CASUALTIES: self.casualties_csv,
            TableNames.VEHICLES: self.vehicles_csv,
        }

    def train_config(self) -> TrainConfig:
        return TrainConfig(max_epochs=self.max_epochs, learning_rate=self.learning_rate,
                           beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon,
                           dropout_rate=self.dropout, patience=self.patience,
                           val_fraction=self.val_fraction, seed=self.seed,
                           clip_norm=self.clip_norm, optimizer=self.optimizer,
                           rms_rho=self.rms_rho, log_every=self.log_every)

    def to_dict(self) -> Dict[str, Any]:
        """Provenance echo embedded in every report"""
        return {key: value for key, value in sorted(asdict(self).items())}


# Only validate in production, not during testing
if os.getenv('FORECAST_ENV') != 'test':
    try:
        Config.validate_config()
    except ConfigValidationError as e:
        logging.warning(f"Configuration validation failed: {e}")
        # Don't raise in import; flags and config files may supply the paths
