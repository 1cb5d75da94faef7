"""Shared sentinels, errors and seed derivation."""

from __future__ import annotations

import hashlib


class UsageError(ValueError):
    """Invalid arguments (maps to CLI exit code 2)."""


class OracleCapError(UsageError):
    """A brute-force oracle was asked to exceed its documented caps (exit 4)."""


class _Fail:
    """FAIL outcome of a build/store.  A value, not an exception."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "FAIL"

    def __bool__(self):
        return False


FAIL = _Fail()


def is_fail(x) -> bool:
    return x is FAIL


class _Infeasible:
    """INFEASIBLE outcome of a capacitated assignment."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFEASIBLE"

    def __bool__(self):
        return False


INFEASIBLE = _Infeasible()


def is_infeasible(x) -> bool:
    return x is INFEASIBLE


def derive_seed(master: int, label: str) -> int:
    """Stable sub-seed for a named purpose; identical across runs/machines."""
    h = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(h[:8], "big") & (2**63 - 1)
