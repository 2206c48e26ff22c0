"""Utility functions for steiner-laminar."""

from pathlib import Path


def format_seconds(seconds: float) -> str:
    """Format a measured wall-clock time in seconds.

    Args:
        seconds: Elapsed time.

    Returns:
        String like "0.003 s" or "1,806.00 s".
    """
    if seconds < 0.1:
        return f"{seconds:.3f} s"
    return f"{seconds:,.2f} s"


def format_duration(seconds: float) -> str:
    """Convert seconds to the largest sensible unit.

    Args:
        seconds: Duration in seconds.

    Returns:
        Human-readable duration, e.g. "15 seconds", "1.75 minutes", "1.09 years".
    """
    if seconds < 60:
        return f"{seconds:g} seconds"
    if seconds < 3600:
        return f"{seconds / 60:.2f} minutes"
    # hours are kept up to two days
    if seconds < 2 * 86400:
        return f"{seconds / 3600:.2f} hours"
    if seconds < 365 * 86400:
        return f"{seconds / 86400:.2f} days"
    return f"{seconds / (365 * 86400):.2f} years"


def format_cost(value: float) -> str:
    """Format an objective value, dropping the decimal point for integers."""
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def shorten_path(path: str) -> str:
    """Shorten paths for display: $HOME -> ~.

    Args:
        path: Path string to shorten

    Returns:
        Shortened path string
    """
    home = str(Path.home())
    if path.startswith(home + "/"):
        return "~" + path[len(home):]
    elif path == home:
        return "~"
    return path
