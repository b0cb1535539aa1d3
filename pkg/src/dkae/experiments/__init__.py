from .config import ExperimentConfig, load_config, parse_config_text
from .runners import (
    run_code_size_sweep,
    run_denoising,
    run_ideal_kernel_table,
    run_kpca_comparison,
    run_lambda_sweep,
)

__all__ = [
    "ExperimentConfig",
    "load_config",
    "parse_config_text",
    "run_code_size_sweep",
    "run_denoising",
    "run_ideal_kernel_table",
    "run_kpca_comparison",
    "run_lambda_sweep",
]
