"""
Loading experiment configuration files.

Files are YAML mappings; values are validated by :class:`ExperimentConfigSerializer`
and turned into the engine's frozen :class:`ExperimentConfig`.
"""
import logging

import yaml

from .engine.exceptions import ConfigError
from .engine.experiment import AttackConfig, DataConfig, DefenseConfig, ExperimentConfig, TriggerConfig
from .serializers import ExperimentConfigSerializer

logger = logging.getLogger(__name__)


def flatten_errors(errors, prefix=''):
    """Turn a nested serializer error structure into ``key.path: message`` strings."""
    messages = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            path = prefix if key == 'non_field_errors' else (f'{prefix}.{key}' if prefix else str(key))
            messages.extend(flatten_errors(value, path))
    elif isinstance(errors, list):
        for item in errors:
            messages.extend(flatten_errors(item, prefix))
    else:
        messages.append(f'{prefix or "config"}: {errors}')
    return messages


def build_config(validated):
    attack = dict(validated['attack'])
    trigger = dict(attack.pop('trigger', {}))
    if 'feature_indices' in trigger:
        trigger['feature_indices'] = tuple(trigger['feature_indices'])
    if 'flip' in attack:
        attack['flip'] = tuple(attack['flip'])
    top = {
        key: value for key, value in validated.items()
        if key not in ('data', 'attack', 'defense')
    }
    return ExperimentConfig(
        **top,
        data=DataConfig(**validated['data']),
        attack=AttackConfig(**attack, trigger=TriggerConfig(**trigger)),
        defense=DefenseConfig(**validated['defense']),
    )


def parse_config(data, seed=None):
    """Validate a configuration mapping; ``seed`` overrides the file's seed."""
    data = dict(data)
    if seed is not None:
        data['seed'] = seed
    serializer = ExperimentConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError(flatten_errors(serializer.errors))
    return build_config(serializer.validated_data)


def load_config(path, seed=None):
    try:
        with open(path) as handle:
            data = yaml.safe_load(handle)
    except FileNotFoundError:
        raise ConfigError([f"{path}: no such file"]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping of settings"])
    logger.debug("loaded configuration from %s", path)
    return parse_config(data, seed=seed)


def config_to_dict(config: ExperimentConfig):
    """JSON-friendly form of a config, with ``lambda`` under its file key."""
    data = config.as_dict()
    data['attack']['lambda'] = data['attack'].pop('scale')
    return data
