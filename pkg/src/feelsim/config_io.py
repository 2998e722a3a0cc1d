"""Strict sectioned key-value experiment configs.

Format: ``[section]`` headers, ``key = value`` lines, ``#`` or ``;``
comments.  Unknown sections or keys are hard errors that name the offending
line, so a typo cannot silently fall back to a default.  Every key has a
documented default; the minimal valid file is just

    [experiment]
    name = demo
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .datagen import FleetSpec, PartitionSpec
from .diversity import DissimilarityMetric, DiversityConfig
from .engine import DataConfig, SimulationConfig
from .errors import ConfigError, FeelsimError
from .learning import TrainConfig
from .network import NetworkConfig
from .scheduler import ConstraintConfig, ScoreWeights


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float(text: str) -> float:
    return float(text)


def _parse_opt_float(text: str) -> Optional[float]:
    if text.lower() in ("none", ""):
        return None
    return float(text)


def _parse_int_list(text: str) -> list:
    return [int(part.strip()) for part in text.split(",") if part.strip()]


def _parse_str_list(text: str) -> list:
    return [part.strip() for part in text.split(",") if part.strip()]


# section -> key -> (parser, default); None default means "required".
SCHEMA = {
    "devices": {
        "n_devices": (int, 20),
        "cpu_freq_min": (_parse_float, 5e8),
        "cpu_freq_max": (_parse_float, 2e9),
        "cycles_per_sample_min": (_parse_float, 5e5),
        "cycles_per_sample_max": (_parse_float, 2e6),
        "tx_power_min": (_parse_float, 0.2),
        "tx_power_max": (_parse_float, 1.0),
        "energy_per_cycle": (_parse_float, 1e-9),
        "capacity_joules": (_parse_float, 200.0),
        "battery_min": (_parse_float, 0.7),
        "battery_max": (_parse_float, 1.0),
        "mean_snr_db": (_parse_float, 10.0),
        "snr_spread_db": (_parse_float, 3.0),
        "std_snr_db": (_parse_float, 2.0),
    },
    "data": {
        "n_classes": (int, 4),
        "dim": (int, 8),
        "samples_per_class": (int, 250),
        "class_sep": (_parse_float, 3.0),
        "test_fraction": (_parse_float, 0.2),
        "skew": (str, "iid"),
        "alpha": (_parse_float, 1.0),
        "size_dist": (str, "balanced"),
        "size_sigma": (_parse_float, 1.0),
        "power_exponent": (_parse_float, 2.0),
        "min_size": (int, 1),
        "redundancy_factor": (_parse_float, 0.0),
        "measure": (str, "shannon"),
        "embedding_m": (int, 2),
        "tolerance_scale": (_parse_float, 0.2),
        "uncertainty_cap": (_parse_float, 2.5),
        "metric": (str, "euclidean"),
        "metric_sigma": (_parse_opt_float, None),
        "sample_size": (int, 64),
    },
    "train": {
        "epochs": (int, 1),
        "batch_size": (int, 16),
        "learning_rate": (_parse_float, 0.1),
        "l2_reg": (_parse_float, 0.0),
        "seed": (int, 0),
    },
    "network": {
        "total_bandwidth": (_parse_float, 1e6),
        "model_size_bits": (_parse_float, 1e6),
        "allocation_strategy": (str, "equal"),
    },
    "constraints": {
        "min_battery": (_parse_float, 0.05),
        "min_snr_db": (_parse_float, -10.0),
        "completion_threshold": (_parse_float, math.inf),
        "min_participants": (int, 1),
        "min_data_size": (int, -1),  # -1: default to the training batch size
    },
    "scheduler": {
        "policy": (str, "diversity_pre"),
        "k": (int, 10),
        "w_diversity": (_parse_float, 0.6),
        "w_battery": (_parse_float, 0.2),
        "w_channel": (_parse_float, 0.2),
        "aggregation": (str, "fedavg"),
        "q": (_parse_float, 0.0),
        "size_priority_inverse": (_parse_bool, False),
        "w_model_dissimilarity": (_parse_float, 0.7),
        "w_model_redundancy": (_parse_float, 0.3),
        "redundancy_cap": (_parse_float, 1.0),
        "outlier_percentile": (_parse_float, 95.0),
    },
    "experiment": {
        "name": (str, None),
        "rounds_max": (int, 50),
        "target_accuracy": (_parse_opt_float, None),
        "seeds": (_parse_int_list, [0]),
        "schedulers": (_parse_str_list, ["diversity_pre"]),
        "output_dir": (str, "results"),
        "master_seed": (int, 0),
    },
}


@dataclass(frozen=True)
class ExperimentSpec:
    """A named batch of runs: one base config swept over schedulers x seeds."""

    name: str
    base: SimulationConfig
    schedulers: list = field(default_factory=lambda: ["diversity_pre"])
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "results"

    def __post_init__(self):
        if not self.name:
            raise ConfigError("experiment name must be non-empty")
        if not self.schedulers or not self.seeds:
            raise ConfigError("need at least one scheduler and one seed")


def _read_raw(path: str) -> dict:
    """path -> {section: {key: (value, line_no)}}, structure errors named."""
    raw: dict = {}
    section = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith(("#", ";")):
                continue
            if stripped.startswith("[") and stripped.endswith("]"):
                section = stripped[1:-1].strip()
                if section not in SCHEMA:
                    raise ConfigError(f"{path}:{line_no}: unknown section [{section}]")
                raw.setdefault(section, {})
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {stripped!r}")
            if section is None:
                raise ConfigError(f"{path}:{line_no}: key outside any [section]")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}:{line_no}: unknown key '{key}' in [{section}]")
            if key in raw[section]:
                raise ConfigError(f"{path}:{line_no}: duplicate key '{key}' in [{section}]")
            raw[section][key] = (value.strip(), line_no)
    return raw


def _coerce(path: str, raw: dict) -> dict:
    values: dict = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (parser, default) in keys.items():
            if section in raw and key in raw[section]:
                text, line_no = raw[section][key]
                try:
                    values[section][key] = parser(text)
                except ValueError as exc:
                    raise ConfigError(f"{path}:{line_no}: bad value for '{key}': {exc}") from exc
            elif default is None and (section, key) == ("experiment", "name"):
                raise ConfigError(f"{path}: missing required key 'name' in [experiment]")
            else:
                values[section][key] = default
    return values


def load_config(path: str) -> ExperimentSpec:
    """Parse and validate a config file into an ExperimentSpec."""
    values = _coerce(path, _read_raw(path))
    dev, dat, trn = values["devices"], values["data"], values["train"]
    net, con, sch, exp = values["network"], values["constraints"], values["scheduler"], values["experiment"]

    try:
        fleet = FleetSpec(**dev)
        metric_kind = dat["metric"]
        sigma = dat["metric_sigma"] if metric_kind == "heat_kernel" else None
        diversity = DiversityConfig(
            classification_measure=dat["measure"],
            embedding_m=dat["embedding_m"],
            tolerance_scale=dat["tolerance_scale"],
            uncertainty_cap=dat["uncertainty_cap"],
            metric=DissimilarityMetric(metric_kind, sigma),
            sample_size=dat["sample_size"],
            model_dissimilarity_weight=sch["w_model_dissimilarity"],
            model_redundancy_weight=sch["w_model_redundancy"],
            redundancy_cap=sch["redundancy_cap"],
            outlier_percentile=sch["outlier_percentile"],
        )
        part = PartitionSpec(
            n_devices=dev["n_devices"],
            skew=dat["skew"],
            alpha=dat["alpha"],
            size_dist=dat["size_dist"],
            size_sigma=dat["size_sigma"],
            power_exponent=dat["power_exponent"],
            min_size=dat["min_size"],
            redundancy_factor=dat["redundancy_factor"],
        )
        data = DataConfig(
            n_classes=dat["n_classes"],
            dim=dat["dim"],
            samples_per_class=dat["samples_per_class"],
            class_sep=dat["class_sep"],
            test_fraction=dat["test_fraction"],
            partition=part,
            diversity=diversity,
        )
        train = TrainConfig(
            epochs=trn["epochs"],
            batch_size=trn["batch_size"],
            learning_rate=trn["learning_rate"],
            l2_reg=trn["l2_reg"],
            seed=trn["seed"],
        )
        network = NetworkConfig(**net)
        min_data = con["min_data_size"]
        constraints = ConstraintConfig(
            min_battery=con["min_battery"],
            min_snr_db=con["min_snr_db"],
            completion_threshold=con["completion_threshold"],
            min_participants=con["min_participants"],
            min_data_size=train.batch_size if min_data < 0 else min_data,
        )
        weights = ScoreWeights(sch["w_diversity"], sch["w_battery"], sch["w_channel"])
        base = SimulationConfig(
            fleet=fleet,
            data=data,
            train=train,
            network=network,
            constraints=constraints,
            weights=weights,
            policy=sch["policy"],
            k_per_round=sch["k"],
            aggregation=sch["aggregation"],
            qffl_q=sch["q"],
            rounds_max=exp["rounds_max"],
            target_accuracy=exp["target_accuracy"],
            master_seed=exp["master_seed"],
            size_priority_inverse=sch["size_priority_inverse"],
        )
    except ConfigError:
        raise
    except FeelsimError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    return ExperimentSpec(
        name=exp["name"],
        base=base,
        schedulers=exp["schedulers"],
        seeds=exp["seeds"],
        output_dir=exp["output_dir"],
    )


def spec_with_overrides(
    spec: ExperimentSpec,
    out_dir: Optional[str] = None,
    seeds: Optional[list] = None,
    schedulers: Optional[list] = None,
) -> ExperimentSpec:
    """Apply command-line overrides on top of a loaded spec."""
    return replace(
        spec,
        output_dir=out_dir if out_dir is not None else spec.output_dir,
        seeds=seeds if seeds else spec.seeds,
        schedulers=schedulers if schedulers else spec.schedulers,
    )
