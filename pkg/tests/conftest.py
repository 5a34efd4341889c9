import numpy as np
import pytest

from streamrag.embed import EmbeddedDoc, QueryVec
from streamrag.hhindex import RetrievalProfile


def unit_rows(rng, n, dim):
    X = rng.standard_normal((n, dim))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def docs_from(X, prefix="d"):
    width = len(str(len(X)))
    return [EmbeddedDoc(f"{prefix}{i:0{width}d}", x) for i, x in enumerate(X)]


def scored_docs(scores, dim=8):
    """Docs whose cosine to e0 equals the given scores (profile = e0)."""
    out = []
    for i, s in enumerate(scores):
        v = np.zeros(dim)
        v[0] = s
        v[1 + i % (dim - 1)] = np.sqrt(1 - s * s)
        out.append(EmbeddedDoc(f"s{i:04d}", v))
    return out


def e0_profile(dim=8, aggregation="max"):
    v = np.zeros(dim)
    v[0] = 1.0
    return RetrievalProfile((QueryVec("q", v),), aggregation)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report their outcome here; printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
