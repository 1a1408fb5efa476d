from django.contrib import admin

from .models import ExperimentRun, RoundRecord


class RoundRecordInline(admin.TabularInline):
    model = RoundRecord
    extra = 0
    fields = ['round_index', 'phase', 'flagged', 'dacc', 'fpr', 'fnr', 'tacc', 'asr']
    readonly_fields = fields
    can_delete = False


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ['name', 'seed', 'attack', 'detector', 'aggregator', 'status', 'dacc', 'final_tacc', 'created_at']
    list_filter = ['status', 'attack', 'detector', 'aggregator']
    search_fields = ['name']
    readonly_fields = ['created_at', 'updated_at', 'duration']
    inlines = [RoundRecordInline]


@admin.register(RoundRecord)
class RoundRecordAdmin(admin.ModelAdmin):
    list_display = ['run', 'round_index', 'phase', 'flagged', 'dacc', 'tacc', 'asr']
    list_filter = ['phase']
