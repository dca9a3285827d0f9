"""
Main application entry point.

Runs the command-line interface and turns its result into the process
exit status.
"""
import sys

from .cli import main as cli_main


def main() -> None:
    """Run the CLI with the process arguments."""
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
