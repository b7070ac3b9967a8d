"""Module entry point: python -m protoclass."""

import sys

from .cli import main

sys.exit(main())
