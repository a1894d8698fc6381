"""Monte Carlo laboratory for limsup random covering sets on regular spaces."""
from .config import ExperimentConfig, load_config, parse_config
from .experiments import ExperimentReport, emit, run

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "ExperimentReport", "emit", "load_config", "parse_config", "run"]
