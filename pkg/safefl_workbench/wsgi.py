"""
WSGI entry point for the SafeFL workbench.

Serves the experiment API (``/api/experiments/``) and the admin site, e.g.
``gunicorn safefl_workbench.wsgi``. Experiments started through the API run
synchronously inside the request, so give workers a generous timeout.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'safefl_workbench.settings')

application = get_wsgi_application()
