"""Shared test fixtures and the acceptance-summary reporter."""

import numpy as np
import pytest

from divdet import Manifest

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {name}: {detail}")


def random_unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Unit-norm rows; rejection keeps norms well away from zero."""
    rows = rng.standard_normal((n, d))
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return rows / norms


def make_manifest(
    rng: np.random.Generator,
    n: int,
    d: int,
    fake_fraction: float = 0.5,
    generator: str = "toy",
) -> Manifest:
    vectors = random_unit_rows(rng, n, d)
    labels = (rng.random(n) < fake_fraction).astype(int)
    # force both classes so curation preconditions hold
    if n >= 2:
        labels[0], labels[1] = 0, 1
    return Manifest.from_arrays(
        ids=[f"r{i:04d}" for i in range(n)],
        labels=labels.tolist(),
        vectors=vectors,
        generators=generator,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
