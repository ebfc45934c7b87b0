"""Run the linear-sweep experiment; extra arguments go to `causalshap experiment linear-sweep`."""
import sys

from causalshap.cli import main

if __name__ == "__main__":
    sys.exit(main(["experiment", "linear-sweep", *sys.argv[1:]]))
