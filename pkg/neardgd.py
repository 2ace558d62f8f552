"""
Command-line entry point.

    python neardgd.py run paper_fig1 --out results/fig1
    python neardgd.py constants configs/my_experiment.json
    python neardgd.py validate quick
    python neardgd.py presets
"""

import sys

from lib.harness import main

if __name__ == "__main__":
    sys.exit(main())
