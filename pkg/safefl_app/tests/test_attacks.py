import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from safefl_app.engine.attacks import (
    ATTACK_KINDS, AttackContext, AttackParams, DistributedBackdoorAttack, HybridAttack,
    build_attack
)
from safefl_app.engine.clients import ClientState
from safefl_app.engine.data import TriggerSpec, gen_blobs
from safefl_app.engine.exceptions import DataError
from safefl_app.engine.networks import SoftmaxRegression


def make_context(benign, malicious_ids=(3, 4), params=None, global_model=None, survives=None,
                 network=None, datasets=None, n_participants=None):
    benign = np.asarray(benign, dtype=np.float64)
    dim = benign.shape[1]
    datasets = datasets or {}
    clients = {cid: ClientState(cid, datasets.get(cid), True, rng_seed=cid) for cid in malicious_ids}
    return AttackContext(
        round_index=1,
        global_model=np.zeros(dim) if global_model is None else np.asarray(global_model, dtype=np.float64),
        benign_updates=benign,
        malicious_ids=tuple(malicious_ids),
        all_malicious_ids=tuple(malicious_ids),
        clients=clients,
        network=network,
        lr=0.5,
        n_participants=n_participants or len(benign) + len(malicious_ids),
        params=params or AttackParams(),
        survives=survives,
    )


class TrimAttackTests(SimpleTestCase):

    def test_one_dimensional_deviation(self):
        benign = [[1.0], [2.0], [3.0]]
        crafted = build_attack('trim')(make_context(benign, params=AttackParams(kind='trim')))
        sigma = np.std([1.0, 2.0, 3.0])
        for model in crafted.values():
            self.assertGreaterEqual(model[0], 2.0 - 4.0 * sigma)
            self.assertLessEqual(model[0], 2.0 - 3.0 * sigma)

    def test_pushes_against_the_update_direction(self):
        benign = [[1.0, -1.0], [1.5, -2.0], [2.0, -1.5]]
        crafted = build_attack('trim')(make_context(benign))
        mu = np.mean(benign, axis=0)
        for model in crafted.values():
            self.assertLess(model[0], mu[0])
            self.assertGreater(model[1], mu[1])

    def test_zero_std_degenerates_to_the_mean(self):
        benign = [[1.0, 2.0]] * 3
        with self.assertLogs('safefl_app.engine.attacks', level='WARNING'):
            crafted = build_attack('trim')(make_context(benign))
        for model in crafted.values():
            assert_allclose(model, [1.0, 2.0])

    def test_per_client_draws_differ(self):
        benign = [[1.0], [2.0], [3.0]]
        crafted = build_attack('trim')(make_context(benign))
        self.assertNotEqual(crafted[3][0], crafted[4][0])


class LittleIsEnoughTests(SimpleTestCase):

    def test_zero_z_submits_the_benign_mean(self):
        benign = [[1.0, 0.0], [3.0, 4.0]]
        crafted = build_attack('lie')(make_context(benign, params=AttackParams(lie_z=0.0)))
        for model in crafted.values():
            assert_allclose(model, [2.0, 2.0])

    def test_default_z(self):
        benign = [[1.0, 0.0], [3.0, 4.0]]
        crafted = build_attack('lie')(make_context(benign))
        assert_allclose(crafted[3], [2.0 + 0.74, 2.0 + 0.74 * 2.0])

    def test_no_benign_updates_falls_back_to_honest_training(self):
        dataset = gen_blobs(5, 2, 2, 2.0, seed=0).dataset
        network = SoftmaxRegression(2, 2)
        ctx = make_context(np.empty((0, network.dim)), network=network, datasets={3: dataset, 4: dataset})
        with self.assertLogs('safefl_app.engine.attacks', level='WARNING'):
            crafted = build_attack('lie')(ctx)
        self.assertEqual(sorted(crafted), [3, 4])


class BackdoorAttackTests(SimpleTestCase):

    def setUp(self):
        self.network = SoftmaxRegression(8, 3)
        self.dataset = gen_blobs(10, 3, 8, 3.0, seed=1).dataset
        self.trigger = TriggerSpec(feature_indices=(4, 5, 6, 7), n_segments=4)
        self.benign = np.zeros((3, self.network.dim))
        self.global_model = self.network.init_params(np.random.default_rng(0))

    def context(self, kind, scale, malicious_ids=(3, 4)):
        return make_context(
            self.benign, malicious_ids=malicious_ids, network=self.network,
            global_model=self.global_model,
            params=AttackParams(kind=kind, scale=scale, trigger=self.trigger),
            datasets={cid: self.dataset for cid in malicious_ids},
        )

    def test_scaling_is_linear_in_lambda(self):
        one = build_attack('scaling')(self.context('scaling', 1.0))
        ten = build_attack('scaling')(self.context('scaling', 10.0))
        for cid in one:
            assert_allclose(ten[cid] - self.global_model, 10.0 * (one[cid] - self.global_model), atol=1e-12)

    def test_default_lambda_is_participants_over_malicious(self):
        ctx = make_context(self.benign, network=self.network, params=AttackParams(kind='scaling'))
        self.assertEqual(ctx.scale, 2.5)

    def test_dba_segments_are_distinct_per_client(self):
        attack = DistributedBackdoorAttack()
        ctx = self.context('dba', 1.0, malicious_ids=(3, 5, 7, 9))
        segments = [attack.segment_for(ctx, cid) for cid in (3, 5, 7, 9)]
        self.assertEqual(segments, [0, 1, 2, 3])

    def test_dba_segments_wrap_around(self):
        attack = DistributedBackdoorAttack()
        ctx = self.context('dba', 1.0, malicious_ids=tuple(range(10, 16)))
        self.assertEqual([attack.segment_for(ctx, cid) for cid in range(10, 16)], [0, 1, 2, 3, 0, 1])

    def test_backdoor_without_trigger(self):
        ctx = make_context(self.benign, network=self.network, params=AttackParams(kind='scaling'),
                           datasets={3: self.dataset, 4: self.dataset})
        with self.assertRaises(DataError):
            build_attack('scaling')(ctx)


class LabelFlipTests(SimpleTestCase):

    def test_flipped_update_opposes_the_honest_one(self):
        network = SoftmaxRegression(4, 2)
        dataset = gen_blobs(20, 2, 4, 3.0, seed=0).dataset
        ctx = make_context(np.zeros((2, network.dim)), malicious_ids=(2,), network=network,
                           datasets={2: dataset})
        flipped = build_attack('label_flip')(ctx)[2]
        honest = build_attack('none')(ctx)[2]
        cosine = flipped @ honest / (np.linalg.norm(flipped) * np.linalg.norm(honest))
        self.assertLess(cosine, -0.99)


class AdaptiveAttackTests(SimpleTestCase):

    def setUp(self):
        self.benign = np.array([[1.0, 0.0], [1.2, 0.4], [0.8, -0.4]])

    def test_accept_everything_goes_to_the_bound(self):
        ctx = make_context(self.benign, params=AttackParams(search_bound=2.0), survives=lambda c: True)
        crafted = build_attack('adaptive')(ctx)
        deviation = np.linalg.norm(crafted[3] - self.benign.mean(axis=0))
        bound = 2.0 * np.mean(np.linalg.norm(self.benign, axis=1))
        self.assertAlmostEqual(float(deviation), float(bound))

    def test_reject_everything_submits_the_mean(self):
        ctx = make_context(self.benign, survives=lambda c: False)
        crafted = build_attack('adaptive')(ctx)
        for model in crafted.values():
            assert_allclose(model, self.benign.mean(axis=0))

    def test_bisection_finds_the_threshold(self):
        mu = self.benign.mean(axis=0)

        def survives(candidates):
            return all(np.linalg.norm(m - mu) <= 0.3 for m in candidates.values())

        ctx = make_context(self.benign, params=AttackParams(search_iterations=40), survives=survives)
        crafted = build_attack('adaptive')(ctx)
        self.assertAlmostEqual(float(np.linalg.norm(crafted[3] - mu)), 0.3, places=6)

    def test_direction_is_minus_std(self):
        ctx = make_context(self.benign, survives=None)
        crafted = build_attack('adaptive')(ctx)
        offset = crafted[3] - self.benign.mean(axis=0)
        self.assertLess(offset[0], 0.0)
        self.assertLess(offset[1], 0.0)


class HybridAttackTests(SimpleTestCase):

    def test_split_by_sorted_id(self):
        hybrid = HybridAttack(build_attack('trim'), build_attack('lie'))
        self.assertEqual(hybrid.split((9, 1, 4)), ((1, 4), (9,)))
        self.assertEqual(hybrid.split((2,)), ((2,), ()))

    def test_halves_are_disjoint_and_cover_every_client(self):
        benign = [[1.0, 0.0], [2.0, 1.0], [0.0, 3.0]]
        ctx = make_context(benign, malicious_ids=(5, 6, 7))
        crafted = build_attack('trim+lie')(ctx)
        self.assertEqual(sorted(crafted), [5, 6, 7])
        lie = np.mean(benign, axis=0) + 0.74 * np.std(benign, axis=0)
        assert_allclose(crafted[7], lie)
        self.assertFalse(np.allclose(crafted[5], lie))

    def test_same_attack_twice_equals_the_attack(self):
        benign = [[1.0, 0.0], [2.0, 1.0], [0.0, 3.0]]
        ctx = make_context(benign, malicious_ids=(5, 6, 7))
        hybrid = build_attack('trim+trim')(ctx)
        plain = build_attack('trim')(ctx)
        for cid in plain:
            assert_array_equal(hybrid[cid], plain[cid])


class RegistryTests(SimpleTestCase):

    def test_kinds(self):
        for kind in ('none', 'trim', 'scaling', 'dba', 'label_flip', 'lie', 'adaptive', 'trim+dba', 'scaling+dba'):
            self.assertIn(kind, ATTACK_KINDS)
            self.assertEqual(build_attack(kind).name, kind)

    def test_unknown_kind(self):
        with self.assertRaises(DataError):
            build_attack('sybil')
