"""Core value types shared by every other module.

All types are frozen dataclasses; arrays they carry are copied on construction
and marked read-only, so instances can be shared across rounds without any
defensive copying.  State evolution (battery drain, participation counters)
happens through ``dataclasses.replace``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import ValidationError

TASK_KINDS = ("classification", "timeseries", "clustering")


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LocalDataset:
    """A device-local dataset: feature rows plus labels for classification."""

    task_kind: str
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    n_samples: int = -1

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise ValidationError("unknown_task_kind", self.task_kind)
        feats = _frozen_array(self.features, float)
        if feats.ndim != 2:
            raise ValidationError("features_not_matrix", f"ndim={feats.ndim}")
        object.__setattr__(self, "features", feats)
        n = feats.shape[0]
        if self.n_samples == -1:
            object.__setattr__(self, "n_samples", n)
        elif self.n_samples != n:
            raise ValidationError("sample_count_mismatch", f"{self.n_samples} != {n}")
        if self.task_kind == "classification":
            if self.labels is None:
                raise ValidationError("missing_labels")
            labels = _frozen_array(self.labels, np.int64)
            if labels.shape != (n,):
                raise ValidationError("label_length_mismatch")
            if n and labels.min() < 0:
                raise ValidationError("negative_label")
            object.__setattr__(self, "labels", labels)
        elif self.labels is not None:
            raise ValidationError("unexpected_labels", self.task_kind)

    def class_counts(self, n_classes: int) -> np.ndarray:
        """Histogram of labels over ``n_classes`` bins (classification only)."""
        if self.labels is None:
            raise ValidationError("missing_labels")
        return np.bincount(self.labels, minlength=n_classes)


@dataclass(frozen=True)
class ChannelState:
    """Per-device channel: current SNR plus the distribution it is drawn from."""

    snr_db: float
    mean_snr_db: float
    std_snr_db: float

    def __post_init__(self):
        if self.std_snr_db < 0:
            raise ValidationError("negative_snr_std")


@dataclass(frozen=True)
class DeviceProfile:
    """Static capabilities and evolving state of one edge device."""

    id: int
    cpu_cycles_per_sample: float
    cpu_freq: float
    battery_level: float
    tx_power: float
    energy_per_cycle: float
    capacity_joules: float
    channel: ChannelState
    dataset: LocalDataset
    participation_count: int = 0
    last_participation_round: Optional[int] = None


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Flat parameter vector with provenance metadata.

    ``round`` is the model version (number of aggregations applied);
    ``source`` is the producing device id, or ``"server"`` for global models.
    """

    weights: np.ndarray
    round: int = 0
    source: Union[int, str] = "server"

    def __post_init__(self):
        w = _frozen_array(self.weights, float)
        if w.ndim != 1:
            raise ValidationError("weights_not_vector", f"ndim={w.ndim}")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class DatasetProfile:
    """Device-side summary of a local dataset: richness and uncertainty."""

    richness: int
    uncertainty: float
    diversity_index: float


@dataclass(frozen=True)
class DeviceReport:
    """The only message a device sends the server before selection.

    Deliberately minimal: one scalar diversity index plus the battery level.
    Raw data, per-class counts, and sample statistics never cross this
    boundary.
    """

    device_id: int
    diversity_index: float
    battery_level: float


@dataclass(frozen=True)
class ScheduleDecision:
    """Outcome of one scheduling step."""

    selected: tuple
    bandwidth_share: dict
    predicted_completion: dict
    round_valid: bool


@dataclass(frozen=True)
class RoundRecord:
    """Everything logged about one communication round."""

    round: int
    duration_s: float
    total_energy_j: float
    participants: tuple
    global_accuracy: float
    global_loss: float
    jain_fairness: float
    aborted: bool = False
    device_times: dict = field(default_factory=dict)
    device_energy: dict = field(default_factory=dict)


def validate_profile(profile: DeviceProfile, current_round: Optional[int] = None) -> None:
    """Check every DeviceProfile invariant; raise on the first violation.

    The raised ValidationError names the violated invariant in its ``code``.
    ``current_round`` additionally bounds the participation counter when the
    caller knows which round the profile belongs to.
    """
    if not (0.0 <= profile.battery_level <= 1.0) or math.isnan(profile.battery_level):
        raise ValidationError("battery_out_of_range", f"{profile.battery_level}")
    if not profile.cpu_freq > 0:
        raise ValidationError("nonpositive_frequency", f"{profile.cpu_freq}")
    if not profile.cpu_cycles_per_sample > 0:
        raise ValidationError("nonpositive_cycles", f"{profile.cpu_cycles_per_sample}")
    if profile.tx_power < 0:
        raise ValidationError("negative_tx_power", f"{profile.tx_power}")
    if profile.energy_per_cycle < 0:
        raise ValidationError("negative_energy_per_cycle", f"{profile.energy_per_cycle}")
    if not profile.capacity_joules > 0:
        raise ValidationError("nonpositive_capacity", f"{profile.capacity_joules}")
    if profile.participation_count < 0:
        raise ValidationError("negative_participation")
    if current_round is not None and profile.participation_count > current_round:
        raise ValidationError(
            "participation_ahead_of_round",
            f"{profile.participation_count} > {current_round}",
        )
