"""
Configuration Management
-----------------------
Handles configuration loading from environment variables.
Provides agent, harness and logging configuration objects and validation.
"""

import math
import os
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional
from dotenv import load_dotenv

from exceptions import ConfigError
from models import AgentKind

logger = logging.getLogger(__name__)


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(name, str(default)))


def _env_int(name: str, default: int) -> int:
    return int(os.getenv(name, str(default)))


@dataclass
class AgentConfig:
    """Agent configuration settings."""
    kind: AgentKind = AgentKind.FARMAP
    gamma: float = 0.9
    rho: float = 2.0
    epsilon: float = 5.0
    min_samples: int = 25
    sample_guard: bool = True
    low_z_gate: Optional[float] = None
    fov_deg: float = 130.0
    obs_h: int = 15
    obs_w: int = 15
    seed: int = 0
    frag_probability: float = 0.0
    frag_interval: int = 0
    use_zscore: bool = True
    surprisal_threshold: float = 0.7
    ltm_subgoal: bool = True
    frontier_weighting: Optional[str] = None
    forget_below_floor: bool = False
    spill_dir: Optional[str] = None

    @property
    def label(self) -> str:
        """Agent name as written in summary tables."""
        if self.kind == AgentKind.FARMAP_RANDOM_FRAG:
            return f"{self.kind.value}={self.frag_probability:g}"
        if self.kind == AgentKind.FARMAP_UNIFORM_FRAG:
            return f"{self.kind.value}={self.frag_interval}"
        return self.kind.value

    @property
    def weighting(self) -> str:
        if self.frontier_weighting:
            return self.frontier_weighting
        return "inverse_distance" if self.kind == AgentKind.FRONTIER else "size_heading"

    @classmethod
    def from_env(cls) -> 'AgentConfig':
        """Create agent config from environment variables."""
        try:
            obs = _env_int('FARMAP_OBS', 15)
            gate = os.getenv('FARMAP_LOW_Z_GATE')
            return cls(
                gamma=_env_float('FARMAP_GAMMA', 0.9),
                rho=_env_float('FARMAP_RHO', 2.0),
                epsilon=_env_float('FARMAP_EPSILON', 5.0),
                min_samples=_env_int('FARMAP_MIN_SAMPLES', 25),
                low_z_gate=float(gate) if gate else None,
                fov_deg=_env_float('FARMAP_FOV', 130.0),
                obs_h=obs,
                obs_w=obs,
                spill_dir=os.getenv('FARMAP_SPILL_DIR') or None,
            )
        except ValueError as e:
            raise ConfigError(f"Invalid agent configuration value: {e}")

    @classmethod
    def from_spec(cls, spec: str, base: Optional['AgentConfig'] = None) -> 'AgentConfig':
        """
        Parse a command-line agent spec.

        Accepts farmap, frontier, random, farmap-randfrag=<p> and
        farmap-unifrag=<L>.
        """
        base = base or cls()
        name, _, arg = spec.partition("=")
        try:
            kind = AgentKind(name)
        except ValueError:
            raise ConfigError(f"Unknown agent: {spec}")
        try:
            if kind == AgentKind.FARMAP_RANDOM_FRAG:
                return replace(base, kind=kind, frag_probability=float(arg))
            if kind == AgentKind.FARMAP_UNIFORM_FRAG:
                return replace(base, kind=kind, frag_interval=int(arg))
        except ValueError:
            raise ConfigError(f"Agent {name} needs a numeric argument, got '{arg}'")
        if arg:
            raise ConfigError(f"Agent {name} takes no argument")
        return replace(base, kind=kind)

    def validate(self):
        """Raise ConfigError when a setting is out of range."""
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if not self.rho > 0:
            raise ConfigError("rho must be positive")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.min_samples < 1 and self.sample_guard:
            raise ConfigError("min_samples must be at least 1")
        if not 0.0 < self.fov_deg <= 360.0:
            raise ConfigError("fov must lie in (0, 360]")
        if self.obs_h % 2 == 0 or self.obs_w % 2 == 0 or self.obs_h < 1 or self.obs_w < 1:
            raise ConfigError("observation window dimensions must be odd")
        if not 0.0 <= self.frag_probability <= 1.0:
            raise ConfigError("fragmentation probability must lie in [0, 1]")
        if self.kind == AgentKind.FARMAP_UNIFORM_FRAG and self.frag_interval < 1:
            raise ConfigError("uniform fragmentation interval must be positive")
        if self.weighting not in ("inverse_distance", "size_heading"):
            raise ConfigError(f"Unknown frontier weighting: {self.weighting}")


@dataclass
class HarnessConfig:
    """Experiment harness settings."""
    budget_multiplier: float = 5.0
    budget_cap: int = 50_000
    bootstrap_samples: int = 10_000
    confidence: float = 0.95
    jobs: int = 1
    out_dir: str = "runs"

    @classmethod
    def from_env(cls) -> 'HarnessConfig':
        """Create harness config from environment variables."""
        try:
            return cls(
                budget_multiplier=_env_float('FARMAP_BUDGET_MULTIPLIER', 5.0),
                budget_cap=_env_int('FARMAP_BUDGET_CAP', 50_000),
                bootstrap_samples=_env_int('FARMAP_BOOTSTRAP_SAMPLES', 10_000),
                jobs=_env_int('FARMAP_JOBS', 1),
                out_dir=os.getenv('FARMAP_OUT_DIR', "runs"),
            )
        except ValueError as e:
            raise ConfigError(f"Invalid harness configuration value: {e}")

    def default_budget(self, empty_cells: int) -> int:
        """Step budget for an environment when none is given."""
        return max(1, min(self.budget_cap, int(math.ceil(self.budget_multiplier * empty_cells))))


@dataclass
class LoggingConfig:
    """Logging configuration settings."""
    level: str = "INFO"
    file: Optional[str] = None
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    @classmethod
    def from_env(cls) -> 'LoggingConfig':
        """Create logging config from environment variables."""
        return cls(
            level=os.getenv('FARMAP_LOG_LEVEL', "INFO"),
            file=os.getenv('FARMAP_LOG_FILE'),
            format=os.getenv('FARMAP_LOG_FORMAT', "%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        )


@dataclass
class RunConfig:
    """One batch: environments x seeds x agents."""
    env_paths: List[str]
    agents: List[AgentConfig]
    seeds: List[int] = field(default_factory=lambda: [0])
    step_budget: Optional[int] = None
    out_dir: str = "runs"
    jobs: int = 1

    def validate(self):
        if not self.env_paths:
            raise ConfigError("at least one environment is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.step_budget is not None and self.step_budget <= 0:
            raise ConfigError("step budget must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be positive")
        for agent in self.agents:
            agent.validate()


@dataclass
class Config:
    """Main configuration class."""
    agent: AgentConfig
    harness: HarnessConfig
    logging: LoggingConfig

    @classmethod
    def load(cls, env_file: Optional[str] = None) -> 'Config':
        """
        Load configuration from environment variables and optional .env file.

        Args:
            env_file: Optional path to .env file

        Returns:
            Config: Configuration object

        Raises:
            ConfigError: If configuration is invalid
        """
        try:
            if env_file:
                if not os.path.exists(env_file):
                    raise ConfigError(f"Environment file not found: {env_file}")
                load_dotenv(env_file)

            return cls(
                agent=AgentConfig.from_env(),
                harness=HarnessConfig.from_env(),
                logging=LoggingConfig.from_env()
            )

        except ConfigError:
            raise
        except Exception as e:
            raise ConfigError(f"Failed to load configuration: {e}")

    @classmethod
    def from_env(cls) -> 'Config':
        """
        Create configuration from environment variables.

        Loads .env from the current directory when present.
        """
        env_file = ".env"
        if os.path.exists(env_file):
            return cls.load(env_file)
        return cls.load()

    def setup_logging(self):
        """Configure logging based on settings."""
        try:
            logging_config = {
                'level': getattr(logging, self.logging.level.upper()),
                'format': self.logging.format
            }

            if self.logging.file:
                log_dir = os.path.dirname(self.logging.file)
                if log_dir:
                    os.makedirs(log_dir, exist_ok=True)
                logging_config['filename'] = self.logging.file

            logging.basicConfig(**logging_config)

        except Exception as e:
            raise ConfigError(f"Failed to configure logging: {e}")

    def validate(self):
        """
        Validate configuration settings.

        Raises:
            ConfigError: If configuration is invalid
        """
        self.agent.validate()
        if self.harness.budget_multiplier <= 0:
            raise ConfigError("budget_multiplier must be positive")
        if self.harness.budget_cap < 1:
            raise ConfigError("budget_cap must be positive")
        if self.harness.bootstrap_samples < 1:
            raise ConfigError("bootstrap_samples must be positive")
        if not 0.0 < self.harness.confidence < 1.0:
            raise ConfigError("confidence must lie in (0, 1)")
        if self.harness.jobs < 1:
            raise ConfigError("jobs must be positive")
