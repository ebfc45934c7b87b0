"""Run the diabetes-risk experiment; extra arguments go to `causalshap experiment diabetes-risk`."""
import sys

from causalshap.cli import main

if __name__ == "__main__":
    sys.exit(main(["experiment", "diabetes-risk", *sys.argv[1:]]))
