"""Shared store for acceptance outcomes, printed by the terminal summary hook."""

RESULTS = {}


def record(number, ok, detail):
    RESULTS[number] = (bool(ok), detail)
    return ok
