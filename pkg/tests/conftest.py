import numpy as np
import pytest


def random_spd(gen: np.random.Generator, p: int, jitter: float = 0.1) -> np.ndarray:
    x = gen.standard_normal((p + 3, p))
    m = x.T @ x / (p + 3) + jitter * np.eye(p)
    return 0.5 * (m + m.T)


def ks_against_grid(samples, grid, log_density) -> float:
    """Two-sided KS distance between samples and a density tabulated on a fine grid."""
    w = np.exp(log_density - np.max(log_density))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    x = np.sort(np.asarray(samples))
    f = np.interp(x, grid, cdf)
    n = x.size
    return float(max(np.max(np.arange(1, n + 1) / n - f), np.max(f - np.arange(n) / n)))


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


# pass/fail lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
