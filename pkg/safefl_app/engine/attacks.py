"""
Poisoning attacks under the full-knowledge threat model.

Every attack sees the broadcast model and all benign local models of the
round before crafting, and returns ``{client_id: submitted_model}`` for the
malicious clients it controls. Attacks are looked up by name in ``ATTACKS``.
"""
import dataclasses
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .clients import ClientState, client_seed, sgd_steps
from .data import TriggerSpec, apply_trigger, flip_labels
from .exceptions import DataError
from .networks import Network

logger = logging.getLogger(__name__)

ATTACKS = {}


def register_attack(name):
    def decorator(cls):
        cls.name = name
        ATTACKS[name] = cls
        return cls
    return decorator


@dataclass(frozen=True)
class AttackParams:
    kind: str = 'none'
    scale: Optional[float] = None
    lie_z: float = 0.74
    trim_z_low: float = 3.0
    trim_z_high: float = 4.0
    poison_fraction: float = 0.5
    trigger: Optional[TriggerSpec] = None
    flip_permutation: Optional[tuple] = None
    search_iterations: int = 20
    search_bound: float = 100.0


@dataclass(frozen=True, eq=False)
class AttackContext:
    """What the attacker knows when crafting round ``round_index``.

    ``malicious_ids`` are the clients this attack crafts for;
    ``all_malicious_ids`` are every participating malicious client (they
    differ inside hybrid attacks). ``survives`` is the attacker's replica of
    the defense: given candidate malicious models it says whether all of
    them would be accepted.
    """

    round_index: int
    global_model: np.ndarray
    benign_updates: np.ndarray
    malicious_ids: tuple
    all_malicious_ids: tuple
    clients: dict
    network: Network
    lr: float
    n_participants: int
    params: AttackParams
    seed: int = 0
    local_steps: int = 1
    batch_size: Optional[int] = None
    survives: Optional[Callable] = None

    @property
    def benign_mean(self):
        return self.benign_updates.mean(axis=0)

    @property
    def benign_std(self):
        return self.benign_updates.std(axis=0)

    @property
    def scale(self):
        """Amplification factor; defaults to participants / malicious participants."""
        if self.params.scale is not None:
            return float(self.params.scale)
        return self.n_participants / max(len(self.all_malicious_ids), 1)

    def rng(self, client_id):
        return np.random.default_rng([self.seed, self.round_index, client_id])

    def train(self, client: ClientState, dataset):
        return sgd_steps(
            self.global_model, dataset, self.network, self.lr,
            local_steps=self.local_steps, batch_size=self.batch_size,
            seed=client_seed(client, self.round_index),
        )


class Attack:
    name = None
    needs_benign = False

    def craft(self, ctx: AttackContext):
        raise NotImplementedError

    def __call__(self, ctx: AttackContext):
        if len(ctx.benign_updates) == 0 and self.needs_benign:
            logger.warning("round %d: no benign updates visible, %s attack skipped", ctx.round_index, self.name)
            return {cid: ctx.train(ctx.clients[cid], ctx.clients[cid].dataset) for cid in ctx.malicious_ids}
        return self.craft(ctx)


@register_attack('none')
class NoAttack(Attack):
    """Malicious clients train honestly."""

    def craft(self, ctx):
        return {cid: ctx.train(ctx.clients[cid], ctx.clients[cid].dataset) for cid in ctx.malicious_ids}


@register_attack('trim')
class TrimAttack(Attack):
    """Push every coordinate against the benign update direction by ``z`` benign std."""

    needs_benign = True

    def craft(self, ctx):
        mu, sigma = ctx.benign_mean, ctx.benign_std
        if not np.any(sigma):
            logger.warning("round %d: benign std is zero, trim attack degenerates", ctx.round_index)
        direction = np.sign(mu - ctx.global_model)
        crafted = {}
        for cid in ctx.malicious_ids:
            z = ctx.rng(cid).uniform(ctx.params.trim_z_low, ctx.params.trim_z_high)
            crafted[cid] = mu - z * sigma * direction
        return crafted


class _TriggerAttack(Attack):
    def segment_for(self, ctx, client_id):
        return None

    def craft(self, ctx):
        trigger = ctx.params.trigger
        if trigger is None:
            raise DataError(f"{self.name} attack needs a trigger")
        crafted = {}
        for cid in ctx.malicious_ids:
            client = ctx.clients[cid]
            poisoned = apply_trigger(
                client.dataset, trigger, ctx.params.poison_fraction,
                segment_index=self.segment_for(ctx, cid),
                seed=[ctx.seed, ctx.round_index, cid],
            )
            trained = ctx.train(client, poisoned)
            crafted[cid] = ctx.global_model + ctx.scale * (trained - ctx.global_model)
        return crafted


@register_attack('scaling')
class ScalingAttack(_TriggerAttack):
    """Backdoor training on trigger-stamped copies, then amplification."""


@register_attack('dba')
class DistributedBackdoorAttack(_TriggerAttack):
    """Each malicious client plants one trigger segment, round-robin by rank."""

    def segment_for(self, ctx, client_id):
        rank = ctx.all_malicious_ids.index(client_id)
        return rank % ctx.params.trigger.n_segments


@register_attack('label_flip')
class LabelFlipAttack(Attack):
    def craft(self, ctx):
        crafted = {}
        for cid in ctx.malicious_ids:
            client = ctx.clients[cid]
            crafted[cid] = ctx.train(client, flip_labels(client.dataset, ctx.params.flip_permutation))
        return crafted


@register_attack('lie')
class LittleIsEnoughAttack(Attack):
    """Submit ``mean + z * std`` of the benign models."""

    needs_benign = True

    def craft(self, ctx):
        crafted = ctx.benign_mean + ctx.params.lie_z * ctx.benign_std
        return {cid: crafted.copy() for cid in ctx.malicious_ids}


@register_attack('adaptive')
class AdaptiveAttack(Attack):
    """Largest deviation along ``-std`` that the attacker's defense replica still accepts.

    Bisection over the deviation magnitude in ``[0, bound]``, where ``bound``
    is ``search_bound`` times the mean benign update norm.
    """

    needs_benign = True

    def craft(self, ctx):
        mu, sigma = ctx.benign_mean, ctx.benign_std
        norm = np.linalg.norm(sigma)
        direction = -sigma / norm if norm > 0 else np.zeros_like(sigma)
        bound = ctx.params.search_bound * float(
            np.mean(np.linalg.norm(ctx.benign_updates - ctx.global_model, axis=1))
        )

        def candidate(gamma):
            return {cid: mu + gamma * direction for cid in ctx.malicious_ids}

        def accepted(gamma):
            return True if ctx.survives is None else bool(ctx.survives(candidate(gamma)))

        if accepted(bound):
            gamma = bound
        elif not accepted(0.0):
            logger.info("round %d: replica rejects the benign mean, submitting it anyway", ctx.round_index)
            gamma = 0.0
        else:
            low, high = 0.0, bound
            for _ in range(ctx.params.search_iterations):
                mid = 0.5 * (low + high)
                if accepted(mid):
                    low = mid
                else:
                    high = mid
            gamma = low
        logger.debug("round %d: adaptive deviation %.6g of bound %.6g", ctx.round_index, gamma, bound)
        return candidate(gamma)


class HybridAttack(Attack):
    """First half of the malicious clients (by id) run ``first``, the rest ``second``."""

    def __init__(self, first: Attack, second: Attack):
        self.first = first
        self.second = second
        self.name = f'{first.name}+{second.name}'

    def split(self, malicious_ids):
        ids = tuple(sorted(malicious_ids))
        half = (len(ids) + 1) // 2
        return ids[:half], ids[half:]

    def craft(self, ctx):
        head, tail = self.split(ctx.malicious_ids)
        crafted = {}
        if head:
            crafted.update(self.first(dataclasses.replace(ctx, malicious_ids=head)))
        if tail:
            crafted.update(self.second(dataclasses.replace(ctx, malicious_ids=tail)))
        return crafted


ATTACK_KINDS = tuple(sorted(ATTACKS)) + ('trim+dba', 'scaling+dba')


def build_attack(kind) -> Attack:
    if '+' in kind:
        first, second = kind.split('+', 1)
        return HybridAttack(build_attack(first), build_attack(second))
    try:
        return ATTACKS[kind]()
    except KeyError:
        raise DataError(f"unknown attack {kind!r}; choose from {ATTACK_KINDS}") from None
