"""
Django settings for the linksim project.

The project uses Django as its application framework: settings, management
commands (the CLI), the test runner and the admin for the run registry.
Simulation tunables are flat LINKSIM_* settings read from the environment
(or a .env file) with the defaults below.

For the full list of Django settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

from pathlib import Path
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'django-insecure-linksim-local-development-key')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.environ.get('DJANGO_DEBUG', 'True') == 'True'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    'core',
    'phy',
    'simulation',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'config.urls'

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {
            "context_processors": [
                "django.template.context_processors.debug",
                "django.template.context_processors.request",
                "django.contrib.auth.context_processors.auth",
                "django.contrib.messages.context_processors.messages",
            ],
        },
    },
]


# Database
# The run registry (SimulationRun) lives here; simulations themselves write CSV.

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# Static files (admin only)

STATIC_URL = "static/"

STATIC_ROOT = BASE_DIR / "staticfiles"


DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

LINKSIM_LOG_LEVEL = os.environ.get('LINKSIM_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{levelname} {asctime} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'core': {'handlers': ['console'], 'level': LINKSIM_LOG_LEVEL, 'propagate': False},
        'phy': {'handlers': ['console'], 'level': LINKSIM_LOG_LEVEL, 'propagate': False},
        'simulation': {'handlers': ['console'], 'level': LINKSIM_LOG_LEVEL, 'propagate': False},
    },
}


# Link-level simulation configuration

LINKSIM_VERSION = '1.0.0'

# Detection
LINKSIM_LLR_CLIP = float(os.environ.get('LINKSIM_LLR_CLIP', '30'))
LINKSIM_MLD_ENUMERATION_CAP = int(os.environ.get('LINKSIM_MLD_ENUMERATION_CAP', str(2 ** 20)))

# Channel coding
LINKSIM_DECODER_ITERATIONS = int(os.environ.get('LINKSIM_DECODER_ITERATIONS', '30'))
LINKSIM_MIN_SUM_SCALE = float(os.environ.get('LINKSIM_MIN_SUM_SCALE', '0.8'))
LINKSIM_CRC_BITS = int(os.environ.get('LINKSIM_CRC_BITS', '24'))

# Link adaptation
LINKSIM_DELTA_BOUND = float(os.environ.get('LINKSIM_DELTA_BOUND', '0.5'))
LINKSIM_OLLA_STEP_FAIL = float(os.environ.get('LINKSIM_OLLA_STEP_FAIL', '0.01'))

# Metrics
LINKSIM_GM_FLOOR_MBPS = float(os.environ.get('LINKSIM_GM_FLOOR_MBPS', '1e-6'))

# Files and workers
LINKSIM_CODE_DIR = Path(os.environ.get('LINKSIM_CODE_DIR', BASE_DIR / 'codes'))
LINKSIM_TABLE_DIR = Path(os.environ.get('LINKSIM_TABLE_DIR', BASE_DIR / 'tables'))
LINKSIM_MI_CURVE_PATH = Path(os.environ.get('LINKSIM_MI_CURVE_PATH', BASE_DIR / 'data' / 'bit_mi_curves.csv'))
LINKSIM_OUTPUT_DIR = Path(os.environ.get('LINKSIM_OUTPUT_DIR', BASE_DIR / 'runs'))
LINKSIM_WORKERS = int(os.environ.get('LINKSIM_WORKERS', '1'))
