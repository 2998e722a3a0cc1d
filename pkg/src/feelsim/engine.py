"""Synchronous round orchestration.

One round in pre-training mode: devices report a scalar dataset-diversity
index with their battery level, the server filters and scores, the selected
devices train and upload, the server aggregates and evaluates.  In
post-training mode every eligible device trains first (and pays that compute
energy), reports a model-diversity index, and only the top K upload.

All state lives in a SimulationState the round functions mutate; the public
entry point ``run_simulation`` is a pure function of its SimulationConfig,
bit-for-bit: identical configs yield identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from . import seeding
from .datagen import FleetSpec, PartitionSpec, make_classification_pool, make_fleet, partition
from .diversity import (
    DiversityConfig,
    dataset_diversity_index,
    model_diversity_index,
    outlier_ceiling,
)
from .domain import (
    DatasetProfile,
    DeviceProfile,
    DeviceReport,
    LocalDataset,
    ModelParams,
    RoundRecord,
    ScheduleDecision,
)
from .errors import ValidationError
from .learning import TrainConfig, aggregate_fedavg, aggregate_loss_weighted, evaluate, init_model, local_train
from .network import NetworkConfig, channel_rate, compute_time, energy_compute, energy_transmit, resample_channel
from .scheduler import (
    ConstraintConfig,
    ScoreWeights,
    filter_eligible,
    jain_fairness,
    schedule_age_fair,
    schedule_data_size_priority,
    schedule_post_training,
    schedule_pre_training,
    schedule_random,
)

POLICIES = ("diversity_pre", "diversity_post", "random", "data_size", "age_fair")
AGGREGATIONS = ("fedavg", "loss_weighted")


@dataclass(frozen=True)
class DataConfig:
    """Pool synthesis, train/test split, partitioning, and diversity knobs."""

    n_classes: int = 4
    dim: int = 8
    samples_per_class: int = 250
    class_sep: float = 3.0
    test_fraction: float = 0.2
    partition: PartitionSpec = field(default_factory=lambda: PartitionSpec(n_devices=20))
    diversity: DiversityConfig = field(default_factory=DiversityConfig)

    def __post_init__(self):
        if not (0.0 < self.test_fraction < 1.0):
            raise ValidationError("test_fraction_out_of_range")


@dataclass(frozen=True)
class SimulationConfig:
    fleet: FleetSpec = field(default_factory=FleetSpec)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    policy: str = "diversity_pre"
    k_per_round: int = 10
    aggregation: str = "fedavg"
    qffl_q: float = 0.0
    rounds_max: int = 50
    target_accuracy: Optional[float] = None
    master_seed: int = 0
    size_priority_inverse: bool = False

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValidationError("unknown_policy", self.policy)
        if self.aggregation not in AGGREGATIONS:
            raise ValidationError("unknown_aggregation", self.aggregation)
        if self.k_per_round < 1:
            raise ValidationError("nonpositive_k")
        if self.rounds_max < 1:
            raise ValidationError("nonpositive_rounds")
        if self.qffl_q < 0:
            raise ValidationError("negative_q")
        if self.target_accuracy is not None and not (0.0 < self.target_accuracy <= 1.0):
            raise ValidationError("target_out_of_range")

    @property
    def n_devices(self) -> int:
        return self.fleet.n_devices

    @property
    def mode(self) -> str:
        return "post_training" if self.policy == "diversity_post" else "pre_training"


@dataclass
class SimulationState:
    """Mutable world the round functions evolve."""

    cfg: SimulationConfig
    devices: dict
    model: ModelParams
    train_pool: LocalDataset
    test_set: LocalDataset
    dataset_profiles: dict
    round: int = 0
    aborted: int = 0
    records: list = field(default_factory=list)


@dataclass(frozen=True)
class SimulationResult:
    rounds: tuple
    final_model: ModelParams
    rounds_to_target: Optional[int]
    aborted_rounds: int


def build_state(cfg: SimulationConfig) -> SimulationState:
    """Synthesize pool, held-out test set, partitions, fleet, and model."""
    data = cfg.data
    pool = make_classification_pool(
        data.n_classes,
        data.dim,
        data.samples_per_class,
        data.class_sep,
        seeding.derive_seed(cfg.master_seed, seeding.POOL),
    )
    perm = seeding.substream(cfg.master_seed, seeding.SPLIT).permutation(pool.n_samples)
    n_test = int(round(data.test_fraction * pool.n_samples))
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    test_set = LocalDataset("classification", pool.features[test_idx], pool.labels[test_idx])
    train_pool = LocalDataset("classification", pool.features[train_idx], pool.labels[train_idx])

    spec = replace(data.partition, n_devices=cfg.fleet.n_devices)
    parts = partition(train_pool, spec, seeding.derive_seed(cfg.master_seed, seeding.PARTITION))
    fleet = make_fleet(cfg.fleet, parts, cfg.master_seed)
    devices = {d.id: d for d in fleet}

    model = init_model(data.dim, data.n_classes, seeding.derive_seed(cfg.master_seed, seeding.MODEL_INIT))
    profiles = {
        d.id: dataset_diversity_index(
            d.dataset,
            data.diversity,
            n_classes=data.n_classes,
            seed=seeding.derive_seed(cfg.master_seed, seeding.DIVERSITY, d.id),
        )
        for d in fleet
    }
    return SimulationState(
        cfg=cfg,
        devices=devices,
        model=model,
        train_pool=train_pool,
        test_set=test_set,
        dataset_profiles=profiles,
    )


def dataset_report(device: DeviceProfile, profile: DatasetProfile) -> DeviceReport:
    """What a device tells the server before training: one scalar + battery."""
    return DeviceReport(
        device_id=device.id,
        diversity_index=float(profile.diversity_index),
        battery_level=float(device.battery_level),
    )


def model_report(device: DeviceProfile, index: float) -> DeviceReport:
    """What a device tells the server after training: one scalar + battery."""
    return DeviceReport(
        device_id=device.id,
        diversity_index=float(index),
        battery_level=float(device.battery_level),
    )


def _resample_round_channels(state: SimulationState) -> None:
    cfg = state.cfg
    state.devices = {
        did: replace(dev, channel=resample_channel(dev.channel, cfg.master_seed, did, state.round))
        for did, dev in state.devices.items()
    }


def _drain(state: SimulationState, device_id: int, joules: float) -> float:
    """Charge a device's battery with ``joules``; returns what it could pay."""
    dev = state.devices[device_id]
    available = dev.battery_level * dev.capacity_joules
    charged = min(joules, available)
    new_level = max(0.0, dev.battery_level - charged / dev.capacity_joules)
    state.devices[device_id] = replace(dev, battery_level=new_level)
    return charged


def _mark_participation(state: SimulationState, device_id: int) -> None:
    dev = state.devices[device_id]
    state.devices[device_id] = replace(
        dev,
        participation_count=dev.participation_count + 1,
        last_participation_round=state.round,
    )


def _jain(state: SimulationState) -> float:
    return jain_fairness({did: d.participation_count for did, d in state.devices.items()})


def _aggregate(cfg: SimulationConfig, updates: list) -> ModelParams:
    if cfg.aggregation == "loss_weighted":
        return aggregate_loss_weighted(updates, cfg.qffl_q)
    return aggregate_fedavg(updates)


def _train_one(state: SimulationState, device_id: int):
    cfg = state.cfg
    dev = state.devices[device_id]
    tcfg = replace(cfg.train, seed=seeding.derive_seed(cfg.master_seed, seeding.TRAINING, device_id, state.round))
    return local_train(state.model, dev.dataset, tcfg, device_id=device_id)


def _finish_round(state: SimulationState, record: RoundRecord) -> RoundRecord:
    state.records.append(record)
    state.round += 1
    return record


def _abort_record(state: SimulationState, device_times: dict, device_energy: dict) -> RoundRecord:
    accuracy, loss = evaluate(state.model, state.test_set)
    state.aborted += 1
    return RoundRecord(
        round=state.round,
        duration_s=max(device_times.values()) if device_times else 0.0,
        total_energy_j=sum(device_energy.values()),
        participants=(),
        global_accuracy=accuracy,
        global_loss=loss,
        jain_fairness=_jain(state),
        aborted=True,
        device_times=device_times,
        device_energy=device_energy,
    )


def _schedule(state: SimulationState, eligible: list) -> ScheduleDecision:
    cfg = state.cfg
    if cfg.policy == "diversity_pre":
        diversity = {d.id: dataset_report(d, state.dataset_profiles[d.id]).diversity_index for d in eligible}
        return schedule_pre_training(
            eligible, diversity, cfg.k_per_round, cfg.weights, cfg.constraints, cfg.network, cfg.train.epochs
        )
    if cfg.policy == "random":
        seed = seeding.derive_seed(cfg.master_seed, seeding.SCHEDULING, state.round)
        return schedule_random(eligible, cfg.k_per_round, seed, cfg.constraints, cfg.network, cfg.train.epochs)
    if cfg.policy == "data_size":
        seed = seeding.derive_seed(cfg.master_seed, seeding.SCHEDULING, state.round)
        return schedule_data_size_priority(
            eligible,
            cfg.k_per_round,
            seed,
            cfg.constraints,
            cfg.network,
            cfg.train.epochs,
            inverse=cfg.size_priority_inverse,
        )
    if cfg.policy == "age_fair":
        return schedule_age_fair(
            eligible, cfg.k_per_round, state.round, cfg.constraints, cfg.network, cfg.train.epochs
        )
    raise ValidationError("unknown_policy", cfg.policy)


def run_round_pre(state: SimulationState) -> RoundRecord:
    """One select-train-upload-aggregate round; only selected devices work."""
    cfg = state.cfg
    _resample_round_channels(state)
    ordered = [state.devices[did] for did in sorted(state.devices)]
    eligible = filter_eligible(ordered, cfg.constraints, cfg.network, cfg.train.epochs)
    decision = _schedule(state, eligible)
    if not decision.round_valid:
        return _finish_round(state, _abort_record(state, {}, {}))

    times, energies, updates = {}, {}, []
    for did in sorted(decision.selected):
        dev = state.devices[did]
        t_compute = compute_time(dev, dev.dataset.n_samples, cfg.train.epochs)
        rate = channel_rate(dev.channel, decision.bandwidth_share[did])
        t_comm = cfg.network.model_size_bits / rate
        times[did] = t_compute + t_comm
        joules = energy_compute(dev, dev.dataset.n_samples, cfg.train.epochs) + energy_transmit(dev, t_comm)
        updates.append(_train_one(state, did))
        energies[did] = _drain(state, did, joules)
        _mark_participation(state, did)

    state.model = _aggregate(cfg, updates)
    accuracy, loss = evaluate(state.model, state.test_set)
    record = RoundRecord(
        round=state.round,
        duration_s=max(times.values()),
        total_energy_j=sum(energies.values()),
        participants=tuple(sorted(decision.selected)),
        global_accuracy=accuracy,
        global_loss=loss,
        jain_fairness=_jain(state),
        aborted=False,
        device_times=times,
        device_energy=energies,
    )
    return _finish_round(state, record)


def run_round_post(state: SimulationState) -> RoundRecord:
    """One broadcast-train-report-upload round; every eligible device trains.

    Compute energy is sunk by all eligible devices before the server decides,
    so it is charged even when the round aborts; only the top K by model
    diversity pay for and gate on the upload.
    """
    cfg = state.cfg
    data = cfg.data
    _resample_round_channels(state)
    ordered = [state.devices[did] for did in sorted(state.devices)]
    eligible = filter_eligible(ordered, cfg.constraints, cfg.network, cfg.train.epochs)

    compute_times, energies, updates = {}, {}, {}
    for dev in eligible:
        did = dev.id
        compute_times[did] = compute_time(dev, dev.dataset.n_samples, cfg.train.epochs)
        updates[did] = _train_one(state, did)
        energies[did] = _drain(state, did, energy_compute(dev, dev.dataset.n_samples, cfg.train.epochs))

    grouping = (data.n_classes, data.dim + 1)
    div = data.diversity
    raw = {
        did: model_diversity_index(
            upd.params,
            state.model,
            grouping,
            (div.model_dissimilarity_weight, div.model_redundancy_weight),
            redundancy_cap=div.redundancy_cap,
        )
        for did, upd in updates.items()
    }
    if raw:
        ceiling = outlier_ceiling(list(raw.values()), div.outlier_percentile)
        raw = {did: min(v, ceiling) for did, v in raw.items()}
    reports = {did: model_report(state.devices[did], raw[did]) for did in raw}
    indices = {did: rep.diversity_index for did, rep in reports.items()}

    current = [state.devices[d.id] for d in eligible]
    decision = schedule_post_training(
        current, indices, cfg.k_per_round, cfg.constraints, cfg.network, cfg.train.epochs
    )
    if not decision.round_valid:
        return _finish_round(state, _abort_record(state, dict(compute_times), dict(energies)))

    times = {}
    for did in sorted(decision.selected):
        dev = state.devices[did]
        rate = channel_rate(dev.channel, decision.bandwidth_share[did])
        t_comm = cfg.network.model_size_bits / rate
        times[did] = compute_times[did] + t_comm
        energies[did] += _drain(state, did, energy_transmit(dev, t_comm))
        _mark_participation(state, did)

    state.model = _aggregate(cfg, [updates[did] for did in sorted(decision.selected)])
    accuracy, loss = evaluate(state.model, state.test_set)
    record = RoundRecord(
        round=state.round,
        duration_s=max(times.values()),
        total_energy_j=sum(energies.values()),
        participants=tuple(sorted(decision.selected)),
        global_accuracy=accuracy,
        global_loss=loss,
        jain_fairness=_jain(state),
        aborted=False,
        device_times=times,
        device_energy=energies,
    )
    return _finish_round(state, record)


def run_simulation(cfg: SimulationConfig) -> SimulationResult:
    """Run rounds until the accuracy target is met or rounds_max elapse."""
    state = build_state(cfg)
    step = run_round_post if cfg.mode == "post_training" else run_round_pre
    rounds_to_target = None
    for _ in range(cfg.rounds_max):
        record = step(state)
        if cfg.target_accuracy is not None and record.global_accuracy >= cfg.target_accuracy:
            rounds_to_target = state.round
            break
    return SimulationResult(
        rounds=tuple(state.records),
        final_model=state.model,
        rounds_to_target=rounds_to_target,
        aborted_rounds=state.aborted,
    )
