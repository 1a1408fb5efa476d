# safefl_app/urls.py
from django.urls import path
from .views import (
    ExperimentRunView,
    ExperimentRunDetailView,
    RoundRecordListView,
)

app_name = 'safefl_app'

urlpatterns = [
    path('experiments/', ExperimentRunView.as_view(), name='experiment_list'),
    path('experiments/<int:pk>/', ExperimentRunDetailView.as_view(), name='experiment_detail'),
    path('experiments/<int:pk>/rounds/', RoundRecordListView.as_view(), name='experiment_rounds'),
]
