"""Run PolSqueeze from a checkout: python main.py sweep --config configs/fibre_13m.yaml"""

import sys

from simulators.polsqueeze.cli_io import main

if __name__ == "__main__":
    sys.exit(main())
