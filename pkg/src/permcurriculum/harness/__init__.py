"""Command-line orchestration: configs, training runs, evaluation and reports."""

from .config import RunConfig, load_config
from .train import run_training
