"""Per-layer cost tracing.

A CostTrace is activated as a context manager; while active, tensor ops
report their multiply-accumulate counts (conv, matmul) or touched element
counts (normalization, activations, elementwise ops) under the current
module scope. Scopes are pushed by Module.__call__, so a traced forward
pass yields one record per layer path.

Thread-local, so independent forward passes on other threads are unaffected.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field


@dataclass
class CostRecord:
    macs: int = 0
    elems: int = 0


@dataclass
class CostTrace:
    records: dict[str, CostRecord] = field(default_factory=dict)

    def _record(self, path: str) -> CostRecord:
        rec = self.records.get(path)
        if rec is None:
            rec = CostRecord()
            self.records[path] = rec
        return rec


_tls = threading.local()


def _state():
    if not hasattr(_tls, "trace"):
        _tls.trace = None
        _tls.scopes = []
    return _tls


@contextmanager
def trace():
    """Activate a fresh CostTrace for the duration of the block."""
    st = _state()
    prev = st.trace
    st.trace = CostTrace()
    try:
        yield st.trace
    finally:
        st.trace = prev


@contextmanager
def scope(name: str):
    st = _state()
    st.scopes.append(name)
    try:
        yield
    finally:
        st.scopes.pop()


def _current_path() -> str:
    return ".".join(_state().scopes)


def add_macs(n: int) -> None:
    st = _state()
    if st.trace is not None:
        st.trace._record(_current_path()).macs += int(n)


def add_elems(n: int) -> None:
    st = _state()
    if st.trace is not None:
        st.trace._record(_current_path()).elems += int(n)
