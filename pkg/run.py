import sys

from app.cli import main

if __name__ == "__main__":
    # This enables running the CLI directly with "python run.py <command>"
    sys.exit(main())
