from __future__ import annotations

import numpy as np
import pytest

from impq.operators import Projector

SQ2 = 1 / np.sqrt(2)


@pytest.fixture
def xz_pair():
    """Qubit pair with principal angle pi/4: P = |+><+|, Q = |0><0|."""
    return Projector(np.full((2, 2), 0.5)), Projector(np.diag([1.0, 0.0]))


@pytest.fixture
def verdict(request):
    """Print one PASS/FAIL line for an acceptance criterion, bypassing capture."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def report(label: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}" + (f": {detail}" if detail else "")
        if capman is not None:
            with capman.global_and_fixture_disabled():
                print("\n" + line, flush=True)
        else:
            print(line)
        return ok

    return report
