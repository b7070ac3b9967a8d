"""Module entry point: python -m fseb_extractor."""

import sys

from .cli import main

sys.exit(main())
