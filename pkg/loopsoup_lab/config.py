"""
Environment configuration.

Values come from the process environment, optionally seeded from a `.env`
file in the working directory. Experiment parameters live in the JSON
experiment config (see `loopsoup_lab.harness.models`), not here.
"""
import os

from dotenv import load_dotenv

load_dotenv()

_REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Output root for experiment CSV/manifest files
OUTPUT_DIR = os.getenv("LOOPSOUP_OUTPUT_DIR", os.path.join(os.getcwd(), "runs"))

# AlphaTable cache
TABLE_DIR = os.getenv("LOOPSOUP_TABLE_DIR", os.path.join(OUTPUT_DIR, "tables"))

# Logging
LOG_DIR = os.getenv("LOOPSOUP_LOG_DIR", os.path.join(_REPO_ROOT, "logs"))
LOG_FILE = os.getenv("LOOPSOUP_LOG_FILE", os.path.join(LOG_DIR, "structured.jsonl"))
LOG_LEVEL = os.getenv("LOOPSOUP_LOG_LEVEL", "INFO")

# Optional Redis stream sink for logs; empty disables it
REDIS_URL = os.getenv("LOOPSOUP_REDIS_URL", "")
REDIS_STREAM_KEY = os.getenv("LOOPSOUP_REDIS_STREAM_KEY", "loopsoup_lab:logs")
REDIS_STREAM_MAXLEN = int(os.getenv("LOOPSOUP_REDIS_STREAM_MAXLEN", "10000"))
