"""Run the discrete experiment; extra arguments go to `causalshap experiment discrete`."""
import sys

from causalshap.cli import main

if __name__ == "__main__":
    sys.exit(main(["experiment", "discrete", *sys.argv[1:]]))
