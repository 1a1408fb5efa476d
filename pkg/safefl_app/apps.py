from django.apps import AppConfig


class SafeflAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'safefl_app'
    verbose_name = 'SafeFL workbench'
