"""Exceptions raised by the workbench engine."""


class WorkbenchError(Exception):
    """Base class for every error the engine raises on purpose."""


class GraphError(WorkbenchError, ValueError):
    """Invalid tensor-graph construction or evaluation."""


class DataError(WorkbenchError, ValueError):
    """Invalid dataset, partition, trigger or label permutation."""


class AggregationError(WorkbenchError, ValueError):
    """An aggregation rule was called outside its preconditions."""


class DetectionError(WorkbenchError):
    """Synthetic-data generation or detection used out of order."""


class ConfigError(WorkbenchError):
    """Experiment configuration failed validation.

    ``errors`` holds one ``key.path: message`` string per problem.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors) or "invalid configuration")
