"""
ASGI entry point for the SafeFL workbench.

Same routes as the WSGI application; useful behind an ASGI server during
development of the run browser.
"""

import os

from django.core.asgi import get_asgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'safefl_workbench.settings')

application = get_asgi_application()
