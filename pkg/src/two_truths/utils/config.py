"""Run configuration: dataclass defaults < JSON config file < explicit command-line flags"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from two_truths.core.gmm import GmmOptions
from two_truths.core.spectral import SolverOptions
from two_truths.utils.logger import get_logger

LOGGER = get_logger("two_truths.config")

RESOLVED_CONFIG_NAME = "resolved_config.json"


def default_threads() -> int:
    """Worker count from TWO_TRUTHS_THREADS, else the available cores"""
    raw = os.environ.get("TWO_TRUTHS_THREADS", "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"TWO_TRUTHS_THREADS must be an integer, got {raw!r}") from None
        if value < 1:
            raise ValueError(f"TWO_TRUTHS_THREADS must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


@dataclass
class RunConfig:
    """Every parameter a command resolves; serialized next to the run's outputs"""

    command: str = ""
    # inputs
    graph: Optional[str] = None
    labels: Optional[str] = None
    params: Optional[str] = None
    fixture: str = "two_truths_4block"
    manifest: Optional[str] = None
    merge_maps: Optional[str] = None
    composite: bool = False
    compact_ids: bool = False
    weighted: bool = False
    binarize_threshold: float = 0.0
    # clustering
    method: str = "both"
    d: Optional[int] = None  # None = profile likelihood
    K: Optional[int] = None  # None = BIC
    k_max: int = 10
    elbow_index: int = 1
    max_scree: int = 100
    # simulation and Chernoff
    n: int = 4000
    n_big: int = 4000
    trials: int = 50
    four_block_check: bool = False
    x_range: List[float] = field(default_factory=lambda: [0.05, 1.0])
    y_range: List[float] = field(default_factory=lambda: [0.05, 1.0])
    resolution: int = 10
    scale: float = 0.4
    kl_samples: int = 200_000
    n_perm: int = 1000
    ratio_threshold: float = 2.0
    ari_threshold: float = 0.95
    max_failure_fraction: float = 0.10
    # solver options
    solver_tol: float = 1e-8
    solver_max_iter: Optional[int] = None
    gmm_max_iter: int = 500
    gmm_tol: float = 1e-8
    gmm_n_init: int = 5
    # run
    seed: int = 0
    threads: int = field(default_factory=default_threads)
    out_dir: str = "out"
    log_level: Optional[str] = None
    log_file: Optional[str] = None

    def solver_options(self, seed: Optional[int] = None) -> SolverOptions:
        return SolverOptions(tol=self.solver_tol, max_iter=self.solver_max_iter,
                             seed=self.seed if seed is None else seed)

    def gmm_options(self) -> GmmOptions:
        return GmmOptions(max_iter=self.gmm_max_iter, ll_tol=self.gmm_tol, n_init=self.gmm_n_init)

    def methods(self) -> List[str]:
        method = self.method.upper()
        if method == "BOTH":
            return ["LSE", "ASE"]
        if method not in ("ASE", "LSE"):
            raise ValueError(f"method must be ASE, LSE or both, got {self.method!r}")
        return [method]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def write_resolved(self, directory=None) -> Path:
        """Write resolved_config.json; loading it with --config reproduces the run"""
        target = Path(directory or self.out_dir) / RESOLVED_CONFIG_NAME
        target.parent.mkdir(parents=True, exist_ok=True)
        payload = self.to_dict()
        # the log destination does not affect results
        payload.pop("log_file", None)
        target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return target


FIELD_NAMES = frozenset(f.name for f in fields(RunConfig))


def load_config_file(path) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    unknown = sorted(set(data) - FIELD_NAMES)
    if unknown:
        LOGGER.warning("Ignoring unknown config key(s) in %s: %s", path, ", ".join(unknown))
    return {key: value for key, value in data.items() if key in FIELD_NAMES}


def resolve_config(overrides: Mapping[str, Any], config_path=None, command: str = "") -> RunConfig:
    """
    Layer the configuration

    Args:
        overrides: Values the user passed explicitly on the command line
        config_path: Optional JSON config file
        command: Command name recorded in the config

    Returns:
        RunConfig: defaults, then file values, then overrides
    """
    config = RunConfig()
    if config_path:
        config = replace(config, **load_config_file(config_path))
    explicit = {key: value for key, value in overrides.items() if key in FIELD_NAMES}
    config = replace(config, **explicit)
    if command:
        config.command = command
    if config.threads < 1:
        raise ValueError(f"threads must be >= 1, got {config.threads}")
    return config
