"""Poetry script entrypoint for the cdfgnn simulator."""

import sys

from cdfgnn.app import run


def main() -> None:
    """Run the command line and exit with its status."""
    sys.exit(run())


if __name__ == "__main__":
    main()
