# SafeFL App Serializers
from django.conf import settings
from rest_framework import serializers

from .engine.aggregation import AGGREGATION_RULES
from .engine.attacks import ATTACK_KINDS
from .engine.clustering import CLUSTERING_METHODS
from .engine.data import LABEL_RESTRICTED, PROBABILISTIC_Q
from .engine.experiment import DETECTORS
from .engine.networks import SUPPORTED_NETWORKS
from .models import ExperimentRun, RoundRecord


class DataConfigSerializer(serializers.Serializer):
    """
    Blob dataset and client partition settings.
    """
    n_classes = serializers.IntegerField(min_value=2, default=4)
    n_features = serializers.IntegerField(min_value=2, default=16)
    n_per_class = serializers.IntegerField(min_value=1, default=200)
    test_per_class = serializers.IntegerField(min_value=1, default=100)
    separation = serializers.FloatField(min_value=0.0, default=3.0)
    scheme = serializers.ChoiceField(choices=[PROBABILISTIC_Q, LABEL_RESTRICTED], default=PROBABILISTIC_Q)
    q = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.5)
    classes_per_client = serializers.IntegerField(min_value=1, default=3)

    def validate(self, attrs):
        errors = {}
        M = attrs.get('n_classes', 4)
        if attrs.get('n_features', 16) < M:
            errors['n_features'] = ["Must be at least n_classes."]
        if attrs.get('q', 0.5) < 1.0 / M:
            errors['q'] = [f"Must lie in [1/M, 1] = [{1.0 / M:.4g}, 1]."]
        if attrs.get('classes_per_client', 3) > M:
            errors['classes_per_client'] = ["Must not exceed n_classes."]
        if errors:
            raise serializers.ValidationError(errors)
        return attrs


class TriggerConfigSerializer(serializers.Serializer):
    feature_indices = serializers.ListField(
        child=serializers.IntegerField(min_value=0),
        required=False,
        allow_empty=False,
        help_text="Feature indices stamped by the trigger (default: last eight features)"
    )
    value = serializers.FloatField(default=6.0)
    target = serializers.IntegerField(min_value=0, default=0)
    n_segments = serializers.IntegerField(min_value=1, default=4)

    def validate_feature_indices(self, value):
        if len(set(value)) != len(value):
            raise serializers.ValidationError("Trigger feature indices must be distinct.")
        return value


class AttackConfigSerializer(serializers.Serializer):
    """
    Attack selection; ``lambda`` is the amplification factor of scaling and DBA.
    """
    kind = serializers.ChoiceField(choices=ATTACK_KINDS, default='none')
    z = serializers.FloatField(default=0.74, help_text="LIE deviation in benign standard deviations")
    trim_z_low = serializers.FloatField(min_value=0.0, default=3.0)
    trim_z_high = serializers.FloatField(min_value=0.0, default=4.0)
    poison_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.5)
    flip = serializers.ListField(
        child=serializers.IntegerField(min_value=0),
        required=False,
        help_text="Label permutation for label flipping (default: l -> M-1-l)"
    )
    search_iterations = serializers.IntegerField(min_value=1, default=20)
    search_bound = serializers.FloatField(min_value=0.0, default=100.0)
    trigger = TriggerConfigSerializer(required=False)

    def get_fields(self):
        fields = super().get_fields()
        fields['lambda'] = serializers.FloatField(required=False, source='scale')
        return fields

    def validate(self, attrs):
        errors = {}
        if attrs.get('scale') is not None and attrs['scale'] <= 0:
            errors['lambda'] = ["Must be positive."]
        if attrs.get('poison_fraction', 0.5) <= 0:
            errors['poison_fraction'] = ["Must lie in (0, 1]."]
        if attrs.get('trim_z_low', 3.0) > attrs.get('trim_z_high', 4.0):
            errors['trim_z_low'] = ["Must not exceed trim_z_high."]
        if errors:
            raise serializers.ValidationError(errors)
        return attrs


class DefenseConfigSerializer(serializers.Serializer):
    detector = serializers.ChoiceField(choices=DETECTORS, default='safefl_cl')
    aggregator = serializers.ChoiceField(choices=AGGREGATION_RULES, default='fedavg')
    k = serializers.IntegerField(
        min_value=0, required=False,
        help_text="Assumed malicious count for trimmed mean and Krum (default: true count)"
    )
    trajectory_cluster = serializers.ChoiceField(choices=CLUSTERING_METHODS, default='kmeans')
    loss_cluster = serializers.ChoiceField(choices=CLUSTERING_METHODS, default='meanshift')
    bandwidth = serializers.FloatField(required=False, help_text="Mean-shift bandwidth / DBSCAN eps on losses")
    min_pts = serializers.IntegerField(min_value=1, default=2)
    epsilon = serializers.IntegerField(min_value=2, default=25)
    delta = serializers.IntegerField(min_value=1, default=15)
    syngen_lr = serializers.FloatField(default=0.1)
    iterations = serializers.IntegerField(min_value=0, default=500)
    syn_size = serializers.IntegerField(min_value=1, default=20)
    inner_lr = serializers.FloatField(required=False, help_text="SGD step inside SynGen (default: client lr)")
    normalize_over_all = serializers.BooleanField(default=False)

    def validate(self, attrs):
        errors = {}
        if attrs.get('delta', 15) > attrs.get('epsilon', 25) - 1:
            errors['delta'] = ["Must lie in [1, epsilon - 1]."]
        if attrs.get('syngen_lr', 0.1) <= 0:
            errors['syngen_lr'] = ["Must be positive."]
        if attrs.get('inner_lr') is not None and attrs['inner_lr'] <= 0:
            errors['inner_lr'] = ["Must be positive."]
        if attrs.get('bandwidth') is not None and attrs['bandwidth'] <= 0:
            errors['bandwidth'] = ["Must be positive."]
        if errors:
            raise serializers.ValidationError(errors)
        return attrs


class ExperimentConfigSerializer(serializers.Serializer):
    """
    A complete experiment. Cross-section checks are reported under the key
    path of the offending setting.
    """
    name = serializers.CharField(max_length=255, default='experiment')
    n_clients = serializers.IntegerField(min_value=1, default=20)
    malicious_fraction = serializers.FloatField(min_value=0.0, default=0.3)
    rounds = serializers.IntegerField(min_value=1, default=60)
    lr = serializers.FloatField(default=0.5)
    local_steps = serializers.IntegerField(min_value=0, default=1)
    batch_size = serializers.IntegerField(min_value=0, default=0, help_text="0 means full batch")
    selection_rate = serializers.FloatField(min_value=0.0, max_value=1.0, default=1.0)
    dp_noise = serializers.FloatField(min_value=0.0, default=0.0)
    model = serializers.ChoiceField(choices=sorted(SUPPORTED_NETWORKS), default='softmax')
    hidden = serializers.IntegerField(min_value=1, default=8)
    seed = serializers.IntegerField(min_value=0, default=0)
    workers = serializers.IntegerField(min_value=1, required=False)
    data = DataConfigSerializer(required=False)
    attack = AttackConfigSerializer(required=False)
    defense = DefenseConfigSerializer(required=False)

    def validate_malicious_fraction(self, value):
        if value >= 0.5:
            raise serializers.ValidationError("Must lie in [0, 0.5).")
        return value

    def validate_lr(self, value):
        if value <= 0:
            raise serializers.ValidationError("Must be positive.")
        return value

    def validate_selection_rate(self, value):
        if value <= 0:
            raise serializers.ValidationError("Must lie in (0, 1].")
        return value

    def validate(self, attrs):
        data = attrs.setdefault('data', {})
        attack = attrs.setdefault('attack', {})
        defense = attrs.setdefault('defense', {})
        attrs.setdefault('workers', settings.SAFEFL['WORKERS'])
        n = attrs.get('n_clients', 20)
        M = data.get('n_classes', 4)
        F = data.get('n_features', 16)
        errors = {}

        def add(path, message):
            node = errors
            *parents, leaf = path.split('.')
            for key in parents:
                node = node.setdefault(key, {})
            node.setdefault(leaf, []).append(message)

        epsilon = defense.get('epsilon', 25)
        if epsilon >= attrs.get('rounds', 60):
            add('defense.epsilon', "Must be smaller than rounds.")
        if data.get('scheme', PROBABILISTIC_Q) == PROBABILISTIC_Q and n < M:
            add('n_clients', "The probabilistic partition needs at least n_classes clients.")

        trigger = attack.get('trigger', {})
        indices = trigger.get('feature_indices', list(range(max(0, F - 8), F)))
        if any(i >= F for i in indices):
            add('attack.trigger.feature_indices', f"Indices must be smaller than n_features ({F}).")
        raw_trigger = self.initial_data.get('attack', {}).get('trigger', {})
        if 'n_segments' in raw_trigger and trigger['n_segments'] > len(indices):
            add('attack.trigger.n_segments', "Must not exceed the number of trigger indices.")
        if trigger.get('target', 0) >= M:
            add('attack.trigger.target', "Must be a class id below n_classes.")
        if 'flip' in attack and sorted(attack['flip']) != list(range(M)):
            add('attack.flip', f"Must be a permutation of 0..{M - 1}.")

        m = 0 if attack.get('kind', 'none') == 'none' else int(attrs.get('malicious_fraction', 0.3) * n + 1e-9)
        if defense.get('aggregator') == 'krum':
            k = defense.get('k', m)
            if n < k + 3:
                add('defense.k', f"Krum needs n_clients >= k + 3 (n={n}, k={k}).")

        if errors:
            raise serializers.ValidationError(errors)
        return attrs


class RoundRecordSerializer(serializers.ModelSerializer):
    verdicts = serializers.SerializerMethodField()
    losses = serializers.SerializerMethodField()

    class Meta:
        model = RoundRecord
        fields = [
            'round_index', 'phase', 'participants', 'flagged', 'dacc', 'fpr', 'fnr',
            'precision', 'recall', 'f1', 'tacc', 'asr', 'verdicts', 'losses'
        ]

    def get_verdicts(self, obj):
        return obj.get_verdicts_list()

    def get_losses(self, obj):
        return obj.get_losses_list()


class ExperimentRunListSerializer(serializers.ModelSerializer):
    """
    Lightweight serializer for run lists.
    """
    class Meta:
        model = ExperimentRun
        fields = [
            'id', 'name', 'seed', 'status', 'attack', 'detector', 'aggregator',
            'dacc', 'fpr', 'fnr', 'final_tacc', 'final_asr', 'created_at'
        ]


class ExperimentRunSerializer(serializers.ModelSerializer):
    config = serializers.SerializerMethodField()
    summary = serializers.SerializerMethodField()
    malicious_clients = serializers.SerializerMethodField()

    class Meta:
        model = ExperimentRun
        fields = [
            'id', 'name', 'seed', 'status', 'attack', 'detector', 'aggregator',
            'dacc', 'fpr', 'fnr', 'f1', 'final_tacc', 'final_asr', 'summary',
            'config', 'malicious_clients', 'duration', 'error_message',
            'created_at', 'updated_at'
        ]

    def get_config(self, obj):
        return obj.get_config_dict()

    def get_summary(self, obj):
        return obj.get_summary_dict()

    def get_malicious_clients(self, obj):
        return obj.get_malicious_list()
