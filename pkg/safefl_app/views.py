import logging

from rest_framework import generics, status
from rest_framework.pagination import PageNumberPagination
from rest_framework.response import Response
from rest_framework.views import APIView

from .config import build_config, config_to_dict, flatten_errors
from .engine.exceptions import WorkbenchError
from .engine.experiment import run_experiment
from .models import ExperimentRun
from .serializers import (
    ExperimentConfigSerializer, ExperimentRunListSerializer,
    ExperimentRunSerializer, RoundRecordSerializer
)

logger = logging.getLogger(__name__)


class RunPagination(PageNumberPagination):
    page_size = 20
    page_size_query_param = 'page_size'
    max_page_size = 100


class ExperimentRunView(APIView):
    """
    POST a configuration to run it synchronously; GET lists stored runs.
    """
    pagination_class = RunPagination

    def post(self, request):
        serializer = ExperimentConfigSerializer(data=request.data)
        if not serializer.is_valid():
            return Response(
                {'errors': flatten_errors(serializer.errors), 'detail': serializer.errors},
                status=status.HTTP_400_BAD_REQUEST
            )

        config = build_config(serializer.validated_data)
        run = ExperimentRun(
            name=config.name,
            seed=config.seed,
            attack=config.attack.kind,
            detector=config.defense.detector,
            aggregator=config.defense.aggregator,
        )
        run.set_config_dict(config_to_dict(config))
        run.save()

        try:
            result = run_experiment(config)
            run.store_result(result)
        except WorkbenchError as e:
            logger.exception("run %s failed", run.pk)
            run.mark_failed(str(e))
            return Response(
                {'error': f'Experiment failed: {e}', 'id': run.pk},
                status=status.HTTP_500_INTERNAL_SERVER_ERROR
            )
        except Exception as e:
            logger.exception("run %s crashed", run.pk)
            run.mark_failed(f'{type(e).__name__}: {e}')
            return Response(
                {'error': 'Internal error while running the experiment', 'id': run.pk},
                status=status.HTTP_500_INTERNAL_SERVER_ERROR
            )

        return Response(ExperimentRunSerializer(run).data, status=status.HTTP_201_CREATED)

    def get(self, request):
        queryset = ExperimentRun.objects.all()
        for key in ('attack', 'detector', 'status'):
            value = request.query_params.get(key)
            if value:
                queryset = queryset.filter(**{key: value})

        paginator = self.pagination_class()
        page = paginator.paginate_queryset(queryset, request)
        serializer = ExperimentRunListSerializer(page, many=True)
        return paginator.get_paginated_response(serializer.data)


class ExperimentRunDetailView(generics.RetrieveAPIView):
    queryset = ExperimentRun.objects.all()
    serializer_class = ExperimentRunSerializer


class RoundRecordListView(generics.ListAPIView):
    """
    Per-round records of one run, in round order.
    """
    serializer_class = RoundRecordSerializer
    pagination_class = None

    def get_queryset(self):
        return generics.get_object_or_404(ExperimentRun, pk=self.kwargs['pk']).rounds.order_by('round_index')
