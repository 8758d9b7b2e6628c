"""Tagged diagnostic lines on stderr, switched off process-wide by --quiet."""
import sys

_quiet = False


def set_quiet(quiet):
    global _quiet
    _quiet = bool(quiet)


def is_quiet():
    return _quiet


def log(message):
    if not _quiet:
        print(message, file=sys.stderr)
