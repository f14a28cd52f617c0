"""Run the repmode command line: ``python -m repmode``."""

import sys

from .cli import main

sys.exit(main())
