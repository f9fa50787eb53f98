"""Main entry point for the FitzHugh-Nagumo simulator CLI."""

import sys

from app.controller.fhn_cli import main


if __name__ == "__main__":
    sys.exit(main())
