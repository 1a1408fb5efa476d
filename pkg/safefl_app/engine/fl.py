"""
The federated round loop.

Round ``t`` broadcasts the global model, collects local models (malicious
ones crafted by the attack after it has seen every benign model), then:

* ``t < epsilon``: clusters the local models, aggregates the largest cluster
  and appends the result to the trajectory;
* ``t == epsilon``: distills the trajectory into the synthetic dataset once;
* ``t >= epsilon``: scores every local model on the synthetic dataset and
  aggregates the accepted ones.

Without a detector the configured rule aggregates every local model.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .attacks import Attack, AttackContext, AttackParams, build_attack
from .clients import add_dp_noise, train_clients
from .detection import SafeFLDefense, SynGenConfig, syngen
from .exceptions import DetectionError, GraphError
from .networks import Network

logger = logging.getLogger(__name__)

PHASE_TRAJECTORY = 'trajectory'
PHASE_DETECTION = 'detection'
PHASE_NONE = 'none'


class Verdict(str, enum.Enum):
    BENIGN = 'benign'
    MALICIOUS = 'malicious'
    NOT_EVALUATED = 'not_evaluated'


class Trajectory:
    """Global models collected before detection starts, at most ``capacity`` of them."""

    def __init__(self, capacity):
        if capacity < 1:
            raise GraphError("trajectory capacity must be positive")
        self.capacity = capacity
        self.models = []

    def __len__(self):
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    def __getitem__(self, index):
        return self.models[index]

    @property
    def is_full(self):
        return len(self.models) >= self.capacity

    def append(self, model):
        """Store a copy of ``model``; returns ``False`` once the trajectory is full."""
        model = np.array(model, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(model)):
            raise GraphError("trajectory models must be finite")
        if self.models and model.shape != self.models[0].shape:
            raise GraphError(f"trajectory model of shape {model.shape}, expected {self.models[0].shape}")
        if self.is_full:
            return False
        self.models.append(model)
        return True

    def as_array(self):
        return np.stack(self.models) if self.models else np.empty((0, 0))


@dataclass(eq=False)
class RoundState:
    """Outcome of one round.

    ``updates`` has one entry per client; clients not selected this round
    hold ``None`` and the verdict ``not_evaluated``.
    """

    t: int
    global_model: np.ndarray
    updates: list
    verdicts: list
    phase: str
    next_global: np.ndarray
    losses: Optional[np.ndarray] = None
    syngen_ran: bool = False

    @property
    def participants(self):
        return [i for i, v in enumerate(self.verdicts) if v is not Verdict.NOT_EVALUATED]


def collect_trajectory_round(updates, cluster_fn: Callable, aggregator: Callable, trajectory: Trajectory):
    """Aggregate the largest cluster of ``updates`` and append it to ``trajectory``.

    Returns the new global model and the acceptance mask. If the clustering
    accepts nothing (DBSCAN noise only) the last trajectory model is repeated.
    """
    accepted = cluster_fn(np.stack(updates)).mask()
    if accepted.any():
        new_global = aggregator([updates[i] for i in np.flatnonzero(accepted)])
    else:
        logger.warning("trajectory filter accepted no client; repeating the previous global model")
        new_global = trajectory[-1].copy()
    trajectory.append(new_global)
    return new_global, accepted


@dataclass
class ServerSettings:
    lr: float = 0.5
    epsilon: int = 25
    local_steps: int = 1
    batch_size: Optional[int] = None
    selection_rate: float = 1.0
    dp_noise: float = 0.0
    seed: int = 0
    workers: int = 1
    syngen: SynGenConfig = field(default_factory=SynGenConfig)
    attack: AttackParams = field(default_factory=AttackParams)


class FederatedServer:
    """Holds the global model, the trajectory and the detector across rounds.

    Clients are never removed: a flagged client is ignored for the round it
    was flagged in and takes part again in the next one.
    """

    def __init__(self, clients, network: Network, aggregator: Callable, settings: ServerSettings,
                 defense: Optional[SafeFLDefense] = None, attack: Optional[Attack] = None, initial_model=None):
        self.clients = list(clients)
        if [c.id for c in self.clients] != list(range(len(self.clients))):
            raise GraphError("client ids must be 0..n-1 in order")
        self.network = network
        self.aggregator = aggregator
        self.settings = settings
        self.defense = defense
        self.attack = attack or build_attack(settings.attack.kind)
        if initial_model is None:
            initial_model = network.init_params(np.random.default_rng([settings.seed, 3]))
        self.global_model = np.array(initial_model, dtype=np.float64, copy=True)
        self.trajectory = Trajectory(settings.epsilon)
        self.trajectory.append(self.global_model)
        self.syngen_result = None
        self.syngen_runs = 0

    @property
    def n_clients(self):
        return len(self.clients)

    def select(self, t):
        """Participant ids of round ``t`` in increasing order."""
        rate = self.settings.selection_rate
        if rate >= 1.0:
            return list(range(self.n_clients))
        count = max(1, int(round(rate * self.n_clients)))
        rng = np.random.default_rng([self.settings.seed, t, 7])
        return sorted(int(i) for i in rng.choice(self.n_clients, size=count, replace=False))

    def phase(self, t):
        if self.defense is None:
            return PHASE_NONE
        return PHASE_TRAJECTORY if t < self.settings.epsilon else PHASE_DETECTION

    def generate_synthetic(self):
        if self.syngen_runs:
            raise DetectionError("the synthetic dataset is generated once per run")
        self.syngen_result = syngen(self.trajectory, self.network, self.settings.syngen)
        self.defense.synthetic = self.syngen_result.dataset
        self.syngen_runs += 1

    def benign_updates(self, t, benign):
        s = self.settings
        updates = train_clients(
            self.global_model, benign, self.network, s.lr, t,
            local_steps=s.local_steps, batch_size=s.batch_size, workers=s.workers,
        )
        if s.dp_noise > 0:
            updates = [add_dp_noise(u, s.dp_noise, [s.seed, t, c.id, 1]) for u, c in zip(updates, benign)]
        return updates

    def _assemble(self, participants, benign_by_id, crafted):
        return [benign_by_id[cid] if cid in benign_by_id else crafted[cid] for cid in participants]

    def _replica(self, participants, benign_by_id, malicious_ids, detection_phase):
        if self.defense is None:
            return None
        positions = [participants.index(cid) for cid in malicious_ids]

        def survives(crafted):
            mask = self.defense.accepts(self._assemble(participants, benign_by_id, crafted), detection_phase)
            return bool(np.all(mask[positions]))

        return survives

    def run_round(self, t):
        s = self.settings
        phase = self.phase(t)
        syngen_ran = False
        if phase == PHASE_DETECTION and self.defense.synthetic is None:
            self.generate_synthetic()
            syngen_ran = True

        participants = self.select(t)
        benign = [self.clients[cid] for cid in participants if not self.clients[cid].is_malicious]
        malicious_ids = tuple(cid for cid in participants if self.clients[cid].is_malicious)
        benign_by_id = dict(zip((c.id for c in benign), self.benign_updates(t, benign)))

        crafted = {}
        if malicious_ids:
            ctx = AttackContext(
                round_index=t,
                global_model=self.global_model.copy(),
                benign_updates=np.array(list(benign_by_id.values())) if benign_by_id else np.empty((0, self.network.dim)),
                malicious_ids=malicious_ids,
                all_malicious_ids=malicious_ids,
                clients={cid: self.clients[cid] for cid in malicious_ids},
                network=self.network,
                lr=s.lr,
                n_participants=len(participants),
                params=s.attack,
                seed=s.seed,
                local_steps=s.local_steps,
                batch_size=s.batch_size,
                survives=self._replica(participants, benign_by_id, malicious_ids, phase == PHASE_DETECTION),
            )
            crafted = self.attack(ctx)
        received = self._assemble(participants, benign_by_id, crafted)

        losses = None
        if phase == PHASE_NONE:
            accepted = np.ones(len(received), dtype=bool)
            aggregate = self.aggregator(received)
            if t < s.epsilon:
                self.trajectory.append(aggregate)
        elif phase == PHASE_TRAJECTORY:
            aggregate, accepted = collect_trajectory_round(
                received, self.defense.trajectory_cluster, self.aggregator, self.trajectory,
            )
        else:
            verdict = self.defense.detect(received)
            accepted, aggregate, losses = ~verdict.malicious, verdict.aggregate, verdict.losses

        previous = self.global_model
        if aggregate is not None:
            self.global_model = np.asarray(aggregate, dtype=np.float64)

        verdicts = [Verdict.NOT_EVALUATED] * self.n_clients
        updates = [None] * self.n_clients
        full_losses = None if losses is None else np.full(self.n_clients, np.nan)
        for position, cid in enumerate(participants):
            verdicts[cid] = Verdict.BENIGN if accepted[position] else Verdict.MALICIOUS
            updates[cid] = received[position]
            if full_losses is not None:
                full_losses[cid] = losses[position]

        logger.debug("round %d verdicts %s", t, [v.value for v in verdicts])
        return RoundState(
            t=t, global_model=previous, updates=updates, verdicts=verdicts, phase=phase,
            next_global=self.global_model, losses=full_losses, syngen_ran=syngen_ran,
        )
