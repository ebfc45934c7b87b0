"""Run the breakfast experiment; extra arguments go to `causalshap experiment breakfast`."""
import sys

from causalshap.cli import main

if __name__ == "__main__":
    sys.exit(main(["experiment", "breakfast", *sys.argv[1:]]))
