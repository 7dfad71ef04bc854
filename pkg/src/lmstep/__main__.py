"""Module entry point: python -m lmstep ..."""

import sys

from .cli import main

sys.exit(main())
