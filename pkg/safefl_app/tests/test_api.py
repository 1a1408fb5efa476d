from unittest import mock

from django.test import TestCase
from django.urls import reverse
from rest_framework import status
from rest_framework.test import APIClient

from safefl_app.engine.exceptions import DetectionError
from safefl_app.models import ExperimentRun

SMALL_CONFIG = {
    'name': 'api-run',
    'n_clients': 6,
    'malicious_fraction': 0.34,
    'rounds': 5,
    'data': {'n_classes': 3, 'n_features': 6, 'n_per_class': 30, 'test_per_class': 10, 'separation': 4.0},
    'attack': {'kind': 'trim'},
    'defense': {'detector': 'safefl_cl', 'epsilon': 3, 'delta': 1, 'iterations': 5, 'syn_size': 4},
}


class ExperimentApiTests(TestCase):

    def setUp(self):
        self.client = APIClient()
        self.list_url = reverse('safefl_app:experiment_list')

    def test_post_runs_and_stores_the_experiment(self):
        response = self.client.post(self.list_url, SMALL_CONFIG, format='json')
        self.assertEqual(response.status_code, status.HTTP_201_CREATED)
        body = response.json()
        self.assertEqual(body['status'], 'completed')
        self.assertEqual(body['attack'], 'trim')
        self.assertEqual(body['config']['defense']['epsilon'], 3)
        self.assertIn('lambda', body['config']['attack'])
        self.assertEqual(len(body['malicious_clients']), 2)
        self.assertEqual(body['summary']['detection_rounds'], 3)

        rounds = self.client.get(reverse('safefl_app:experiment_rounds', args=[body['id']])).json()
        self.assertEqual([r['round_index'] for r in rounds], [1, 2, 3, 4, 5])
        self.assertEqual([r['phase'] for r in rounds], ['trajectory'] * 2 + ['detection'] * 3)
        self.assertEqual(len(rounds[-1]['verdicts']), 6)
        self.assertEqual(len(rounds[-1]['losses']), 6)
        self.assertEqual(rounds[0]['losses'], [])

    def test_invalid_config_reports_key_paths(self):
        payload = dict(SMALL_CONFIG, rounds=3)
        response = self.client.post(self.list_url, payload, format='json')
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertTrue(any(e.startswith('defense.epsilon:') for e in response.json()['errors']))
        self.assertFalse(ExperimentRun.objects.exists())

    def test_unknown_choice(self):
        payload = dict(SMALL_CONFIG, defense={'aggregator': 'bulyan'})
        response = self.client.post(self.list_url, payload, format='json')
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertIn('aggregator', response.json()['detail']['defense'])

    def test_list_filters_and_detail(self):
        ExperimentRun.objects.create(name='a', attack='trim', detector='safefl_cl', status='completed', config='{}')
        ExperimentRun.objects.create(name='b', attack='lie', detector='none', status='failed', config='{}')
        listing = self.client.get(self.list_url).json()
        self.assertEqual(listing['count'], 2)
        filtered = self.client.get(self.list_url, {'attack': 'lie'}).json()
        self.assertEqual([r['name'] for r in filtered['results']], ['b'])

        run = ExperimentRun.objects.get(name='a')
        detail = self.client.get(reverse('safefl_app:experiment_detail', args=[run.pk])).json()
        self.assertEqual(detail['config'], {})
        self.assertEqual(detail['malicious_clients'], [])

    def test_missing_run(self):
        self.assertEqual(
            self.client.get(reverse('safefl_app:experiment_detail', args=[999])).status_code,
            status.HTTP_404_NOT_FOUND,
        )
        self.assertEqual(
            self.client.get(reverse('safefl_app:experiment_rounds', args=[999])).status_code,
            status.HTTP_404_NOT_FOUND,
        )

    def test_engine_error_marks_the_run_failed(self):
        with mock.patch('safefl_app.views.run_experiment', side_effect=DetectionError('no benign cluster')):
            with self.assertLogs('safefl_app.views', level='ERROR'):
                response = self.client.post(self.list_url, SMALL_CONFIG, format='json')
        self.assertEqual(response.status_code, status.HTTP_500_INTERNAL_SERVER_ERROR)
        run = ExperimentRun.objects.get(pk=response.json()['id'])
        self.assertEqual(run.status, 'failed')
        self.assertEqual(run.error_message, 'no benign cluster')

    def test_unexpected_crash_marks_the_run_failed(self):
        with mock.patch('safefl_app.views.run_experiment', side_effect=FloatingPointError('overflow')):
            with self.assertLogs('safefl_app.views', level='ERROR'):
                response = self.client.post(self.list_url, SMALL_CONFIG, format='json')
        self.assertEqual(response.status_code, status.HTTP_500_INTERNAL_SERVER_ERROR)
        run = ExperimentRun.objects.get(pk=response.json()['id'])
        self.assertEqual(run.status, 'failed')
        self.assertEqual(run.error_message, 'FloatingPointError: overflow')
        self.assertFalse(run.rounds.exists())
