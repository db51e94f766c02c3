"""Atomic integer and boolean cells.

CPython exposes no hardware atomics, so each cell guards its value with its
own tiny lock held only for the duration of one read-modify-write.  No lock
is ever held across two operations, and callers never lock anything
themselves; algorithms built on these cells keep their lock-free structure.
Every operation is sequentially consistent, which also satisfies the
weaker acquire/release orderings callers may ask for.
"""

from __future__ import annotations

from threading import Lock

__all__ = ["AtomicInt", "AtomicBool"]


class AtomicInt:
    __slots__ = ("_value", "_lock")

    def __init__(self, value: int = 0):
        self._value = value
        self._lock = Lock()

    def load(self) -> int:
        with self._lock:
            return self._value

    def store(self, value: int) -> None:
        with self._lock:
            self._value = value

    def exchange(self, value: int) -> int:
        with self._lock:
            old = self._value
            self._value = value
            return old

    def fetch_add(self, delta: int) -> int:
        """Add ``delta`` and return the value held *before* the addition."""
        with self._lock:
            old = self._value
            self._value = old + delta
            return old

    def fetch_sub(self, delta: int) -> int:
        with self._lock:
            old = self._value
            self._value = old - delta
            return old

    def compare_exchange(self, expected: int, desired: int) -> bool:
        with self._lock:
            if self._value == expected:
                self._value = desired
                return True
            return False

    def __repr__(self) -> str:
        return f"AtomicInt({self._value})"


class AtomicBool:
    __slots__ = ("_value", "_lock")

    def __init__(self, value: bool = False):
        self._value = value
        self._lock = Lock()

    def load(self) -> bool:
        with self._lock:
            return self._value

    def store(self, value: bool) -> None:
        with self._lock:
            self._value = value

    def exchange(self, value: bool) -> bool:
        with self._lock:
            old = self._value
            self._value = value
            return old

    def __repr__(self) -> str:
        return f"AtomicBool({self._value})"
