"""
Django settings for crowd_consensus project.
Numerical knobs for the consensus game simulator live at the bottom.
"""

import os
from pathlib import Path
import dj_database_url
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get('SECRET_KEY', 'django-insecure-dev-key-change-in-production')

DEBUG = os.environ.get('DEBUG', 'False').lower() == 'true'

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'consensus',
]

# Database - run ledger. Postgres when DATABASE_URL is set, sqlite otherwise.
DATABASE_URL = os.environ.get('DATABASE_URL')

if DATABASE_URL:
    DATABASES = {
        'default': dj_database_url.config(
            default=DATABASE_URL,
            conn_max_age=600,
            conn_health_checks=True,
        )
    }
else:
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': BASE_DIR / 'db.sqlite3',
        }
    }

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Simulator settings
CONSENSUS_THREADS = int(os.environ.get('CONSENSUS_THREADS') or os.cpu_count() or 1)
CONSENSUS_OUTPUT_DIR = Path(os.environ.get('CONSENSUS_OUTPUT_DIR', BASE_DIR / 'out'))
CONSENSUS_DEFAULT_GRID = int(os.environ.get('CONSENSUS_DEFAULT_GRID', 400))
CONSENSUS_CFL = float(os.environ.get('CONSENSUS_CFL', 0.45))
CONSENSUS_MAX_STEP = float(os.environ.get('CONSENSUS_MAX_STEP', 0.01))  # cfl_dt when nothing moves
CONSENSUS_ODE_STEP = float(os.environ.get('CONSENSUS_ODE_STEP', 1e-3))  # characteristics RK4 step
CONSENSUS_RECORD_RUNS = os.environ.get('CONSENSUS_RECORD_RUNS', 'True').lower() == 'true'
CONSENSUS_PDF_REPORT = os.environ.get('CONSENSUS_PDF_REPORT', 'False').lower() == 'true'

# Logging Configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'INFO',
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
        'consensus': {
            'handlers': ['console'],
            'level': os.environ.get('CONSENSUS_LOG_LEVEL', 'DEBUG'),
            'propagate': False,
        },
    },
}
