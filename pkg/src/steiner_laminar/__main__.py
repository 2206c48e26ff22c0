"""Entry point for python -m steiner_laminar."""

from steiner_laminar.cli import main

if __name__ == "__main__":
    main()
