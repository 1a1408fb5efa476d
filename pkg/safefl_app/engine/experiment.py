"""
End-to-end experiments: configuration, per-round reports, summary and artifacts.
"""
import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .aggregation import make_aggregator
from .attacks import AttackParams, build_attack
from .clients import ClientState
from .clustering import make_clusterer
from .data import PROBABILISTIC_Q, PartitionSpec, TriggerSpec, gen_blobs, partition
from .detection import SafeFLDefense, SynGenConfig
from .fl import PHASE_DETECTION, PHASE_NONE, PHASE_TRAJECTORY, FederatedServer, ServerSettings, Verdict
from .metrics import asr, detection_metrics, mean_defined, segment_asr, tacc
from .networks import build_network
from .persistence import save_synthetic, save_trajectory

logger = logging.getLogger(__name__)

DETECTORS = ('none', 'safefl_ml', 'safefl_cl')

ROUND_COLUMNS = (
    'round', 'phase', 'participants', 'flagged', 'dacc', 'fpr', 'fnr',
    'precision', 'recall', 'f1', 'tacc', 'asr', 'verdicts', 'losses',
)
DETECTION_KEYS = ('dacc', 'fpr', 'fnr', 'precision', 'recall', 'f1')


@dataclass(frozen=True)
class DataConfig:
    n_classes: int = 4
    n_features: int = 16
    n_per_class: int = 200
    test_per_class: int = 100
    separation: float = 3.0
    scheme: str = PROBABILISTIC_Q
    q: float = 0.5
    classes_per_client: int = 3


@dataclass(frozen=True)
class TriggerConfig:
    """``feature_indices`` of ``None`` means the last eight features."""

    feature_indices: Optional[tuple] = None
    value: float = 6.0
    target: int = 0
    n_segments: int = 4

    def build(self, n_features):
        indices = self.feature_indices
        if indices is None:
            indices = tuple(range(max(0, n_features - 8), n_features))
        return TriggerSpec(tuple(indices), self.value, self.target, min(self.n_segments, len(indices)))


@dataclass(frozen=True)
class AttackConfig:
    kind: str = 'none'
    scale: Optional[float] = None
    z: float = 0.74
    trim_z_low: float = 3.0
    trim_z_high: float = 4.0
    poison_fraction: float = 0.5
    flip: Optional[tuple] = None
    search_iterations: int = 20
    search_bound: float = 100.0
    trigger: TriggerConfig = field(default_factory=TriggerConfig)


@dataclass(frozen=True)
class DefenseConfig:
    detector: str = 'safefl_cl'
    aggregator: str = 'fedavg'
    k: Optional[int] = None
    trajectory_cluster: str = 'kmeans'
    loss_cluster: str = 'meanshift'
    bandwidth: Optional[float] = None
    min_pts: int = 2
    epsilon: int = 25
    delta: int = 15
    syngen_lr: float = 0.1
    iterations: int = 500
    syn_size: int = 20
    inner_lr: Optional[float] = None
    normalize_over_all: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = 'experiment'
    n_clients: int = 20
    malicious_fraction: float = 0.3
    rounds: int = 60
    lr: float = 0.5
    local_steps: int = 1
    batch_size: int = 0
    selection_rate: float = 1.0
    dp_noise: float = 0.0
    model: str = 'softmax'
    hidden: int = 8
    seed: int = 0
    workers: int = 1
    data: DataConfig = field(default_factory=DataConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    defense: DefenseConfig = field(default_factory=DefenseConfig)

    @property
    def n_malicious(self):
        """Malicious client count; an honest run has none whatever the fraction."""
        if self.attack.kind == 'none':
            return 0
        return int(np.floor(self.malicious_fraction * self.n_clients + 1e-9))

    def as_dict(self):
        return dataclasses.asdict(self)


@dataclass
class RoundReport:
    t: int
    phase: str
    verdicts: list
    n_participants: int
    n_flagged: int
    dacc: Optional[float] = None
    fpr: Optional[float] = None
    fnr: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    tacc: Optional[float] = None
    asr: Optional[float] = None
    losses: Optional[list] = None

    def as_row(self):
        row = {
            'round': self.t,
            'phase': self.phase,
            'participants': self.n_participants,
            'flagged': self.n_flagged,
        }
        for key in DETECTION_KEYS + ('tacc', 'asr'):
            row[key] = format_float(getattr(self, key))
        row['verdicts'] = ''.join(VERDICT_CODES[v] for v in self.verdicts)
        row['losses'] = '' if self.losses is None else ' '.join(format_float(v) for v in self.losses)
        return row


VERDICT_CODES = {'benign': 'B', 'malicious': 'M', 'not_evaluated': '-'}


def format_float(value):
    """Fixed formatting so CSV output is stable across runs; ``None``/NaN become empty."""
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ''
    return f'{float(value):.6f}'


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    reports: list
    summary: dict
    malicious_ids: tuple
    trajectory: list
    syngen_result: Optional[object] = None
    final_model: Optional[np.ndarray] = None
    duration: float = 0.0


def client_rng_seed(seed, client_id):
    return int(np.random.SeedSequence([seed, client_id]).generate_state(1)[0])


def build_clients(config: ExperimentConfig, train_set):
    parts = partition(train_set, PartitionSpec(
        scheme=config.data.scheme,
        q=config.data.q,
        classes_per_client=config.data.classes_per_client,
        n_clients=config.n_clients,
        seed=config.seed,
    ))
    rng = np.random.default_rng([config.seed, 2])
    malicious = tuple(sorted(int(i) for i in rng.choice(config.n_clients, size=config.n_malicious, replace=False)))
    clients = [
        ClientState(id=i, dataset=part, is_malicious=i in malicious, rng_seed=client_rng_seed(config.seed, i))
        for i, part in enumerate(parts)
    ]
    return clients, malicious


def build_defense(config: ExperimentConfig, network, aggregator):
    d = config.defense
    if d.detector == 'none':
        return None
    return SafeFLDefense(
        mode=d.detector.split('_', 1)[1],
        network=network,
        aggregator=aggregator,
        trajectory_cluster=make_clusterer(d.trajectory_cluster, k=2, seed=config.seed, min_pts=d.min_pts),
        loss_cluster=make_clusterer(d.loss_cluster, k=2, seed=config.seed, bandwidth=d.bandwidth,
                                    min_pts=d.min_pts),
        normalize_over_all=d.normalize_over_all,
    )


def server_settings(config: ExperimentConfig, trigger):
    d, a = config.defense, config.attack
    return ServerSettings(
        lr=config.lr,
        epsilon=d.epsilon,
        local_steps=config.local_steps,
        batch_size=config.batch_size or None,
        selection_rate=config.selection_rate,
        dp_noise=config.dp_noise,
        seed=config.seed,
        workers=config.workers,
        syngen=SynGenConfig(
            iterations=d.iterations,
            lr=d.syngen_lr,
            steps=d.delta,
            inner_lr=d.inner_lr if d.inner_lr is not None else config.lr,
            size=d.syn_size,
            seed=config.seed,
        ),
        attack=AttackParams(
            kind=a.kind,
            scale=a.scale,
            lie_z=a.z,
            trim_z_low=a.trim_z_low,
            trim_z_high=a.trim_z_high,
            poison_fraction=a.poison_fraction,
            trigger=trigger,
            flip_permutation=a.flip,
            search_iterations=a.search_iterations,
            search_bound=a.search_bound,
        ),
    )


def round_report(state, ground_truth, network, test_set, trigger):
    participants = state.participants
    flagged = np.array([state.verdicts[i] is Verdict.MALICIOUS for i in participants], dtype=bool)
    report = RoundReport(
        t=state.t,
        phase=state.phase,
        verdicts=[v.value for v in state.verdicts],
        n_participants=len(participants),
        n_flagged=int(flagged.sum()),
        tacc=tacc(state.next_global, network, test_set),
        asr=asr(state.next_global, network, test_set, trigger),
    )
    if state.phase != PHASE_NONE:
        m = detection_metrics(flagged, ground_truth[participants])
        for key in DETECTION_KEYS:
            setattr(report, key, getattr(m, key))
    if state.losses is not None:
        report.losses = [None if np.isnan(v) else float(v) for v in state.losses]
    return report


def summarize(config: ExperimentConfig, reports, final_model, network, test_set, trigger):
    """Averages over detection rounds and, separately, over trajectory rounds."""
    detection = [r for r in reports if r.phase == PHASE_DETECTION]
    filtering = [r for r in reports if r.phase == PHASE_TRAJECTORY]
    summary = {
        'name': config.name,
        'seed': config.seed,
        'attack': config.attack.kind,
        'detector': config.defense.detector,
        'aggregator': config.defense.aggregator,
        'rounds': config.rounds,
        'epsilon': config.defense.epsilon,
        'n_clients': config.n_clients,
        'n_malicious': config.n_malicious,
        'detection_rounds': len(detection),
    }
    for key in DETECTION_KEYS:
        summary[key] = mean_defined([getattr(r, key) for r in detection])
    for key in ('dacc', 'fpr', 'fnr'):
        summary[f'trajectory_{key}'] = mean_defined([getattr(r, key) for r in filtering])
    summary['mean_flagged'] = mean_defined([r.n_flagged for r in detection])
    summary['final_tacc'] = reports[-1].tacc if reports else None
    full, per_segment = segment_asr(final_model, network, test_set, trigger)
    summary['final_asr'] = full
    for index, value in enumerate(per_segment):
        summary[f'final_asr_segment_{index}'] = value
    return summary


def build_datasets(config: ExperimentConfig):
    """Train and test blobs; both share the class centers."""
    data = config.data
    train_set = gen_blobs(data.n_per_class, data.n_classes, data.n_features, data.separation, [config.seed, 0]).dataset
    test_set = gen_blobs(data.test_per_class, data.n_classes, data.n_features, data.separation, [config.seed, 1]).dataset
    return train_set, test_set


def run_experiment(config: ExperimentConfig, out_dir=None):
    """Run ``config.rounds`` rounds and optionally write the artifacts to ``out_dir``."""
    started = time.monotonic()
    data = config.data
    train_set, test_set = build_datasets(config)
    trigger = config.attack.trigger.build(data.n_features)
    network = build_network(config.model, data.n_features, data.n_classes, config.hidden)

    clients, malicious = build_clients(config, train_set)
    ground_truth = np.array([c.is_malicious for c in clients], dtype=bool)
    k = config.defense.k if config.defense.k is not None else len(malicious)
    aggregator = make_aggregator(config.defense.aggregator, k)
    defense = build_defense(config, network, aggregator)
    server = FederatedServer(
        clients, network, aggregator, server_settings(config, trigger),
        defense=defense, attack=build_attack(config.attack.kind),
    )
    logger.info(
        "experiment %s: %d clients (%d malicious), attack=%s, detector=%s, AR=%s, seed=%d",
        config.name, config.n_clients, len(malicious), config.attack.kind,
        config.defense.detector, config.defense.aggregator, config.seed,
    )

    reports = []
    for t in range(1, config.rounds + 1):
        state = server.run_round(t)
        report = round_report(state, ground_truth, network, test_set, trigger)
        reports.append(report)
        logger.info(
            "round %d [%s] flagged %d/%d tacc=%.4f", t, report.phase,
            report.n_flagged, report.n_participants, report.tacc,
        )

    summary = summarize(config, reports, server.global_model, network, test_set, trigger)
    result = ExperimentResult(
        config=config,
        reports=reports,
        summary=summary,
        malicious_ids=malicious,
        trajectory=list(server.trajectory),
        syngen_result=server.syngen_result,
        final_model=server.global_model,
        duration=time.monotonic() - started,
    )
    if out_dir is not None:
        write_artifacts(result, out_dir)
    return result


def write_rounds_csv(path, reports):
    with open(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=ROUND_COLUMNS)
        writer.writeheader()
        for report in reports:
            writer.writerow(report.as_row())


def write_summary_csv(path, summary):
    with open(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=list(summary))
        writer.writeheader()
        writer.writerow({
            key: format_float(value) if isinstance(value, float) or value is None else value
            for key, value in summary.items()
        })


def write_syngen_log(path, syngen_result):
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(['iter', 'objective', 'alpha'])
        if syngen_result is None:
            return
        for iteration, (alpha, value) in enumerate(zip(syngen_result.alphas, syngen_result.objectives)):
            writer.writerow([iteration, f'{value:.9g}', alpha])


def write_artifacts(result: ExperimentResult, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = result.config
    write_rounds_csv(out / 'rounds.csv', result.reports)
    write_summary_csv(out / 'summary.csv', result.summary)
    write_syngen_log(out / 'syngen_log.csv', result.syngen_result)
    save_trajectory(out / 'trajectory.bin', result.trajectory, config.seed, config.model)
    if result.syngen_result is not None:
        save_synthetic(out / 'dsyn.bin', result.syngen_result.dataset, config.seed, config.model)
    logger.info("artifacts written to %s", out)
    return out
