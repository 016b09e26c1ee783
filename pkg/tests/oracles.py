"""Independent reference computations used by the tests."""

import itertools

import numpy as np
from scipy import integrate


def compositions(q, k):
    """All non-negative integer vectors of length ``q`` summing to ``k``."""
    for bars in itertools.combinations(range(k + q - 1), q - 1):
        edges = (-1,) + bars + (k + q - 1,)
        yield np.array([edges[i + 1] - edges[i] - 1 for i in range(q)])


def best_integer_counts(p_r, y_r, k, objective=None):
    """Exhaustive search over count vectors with total ``k``."""
    if objective is None:
        def objective(z):
            return np.sum((y_r - p_r @ z) ** 2)
    best, best_val = None, np.inf
    for z in compositions(p_r.shape[1], k):
        val = objective(z)
        if val < best_val:
            best, best_val = z, val
    return best, best_val


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x`` (modified in place and restored)."""
    g = np.zeros_like(x, dtype=float)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def bin_probabilities(pdf, levels):
    """Probability that a stochastically quantized source lands in each bin.

    Bin ``q`` receives mass from both neighbouring intervals with the hat
    weight ``1 - |s - u_q| / delta``.
    """
    q = len(levels)
    probs = np.zeros(q)
    for j in range(q - 1):
        a, b = levels[j], levels[j + 1]
        d = b - a
        probs[j] += integrate.quad(lambda s: pdf(s) * (b - s) / d, a, b)[0]
        probs[j + 1] += integrate.quad(lambda s: pdf(s) * (s - a) / d, a, b)[0]
    return probs


def expected_occupancy(probs, k):
    """Expected number of distinct bins hit by ``k`` independent draws."""
    return float(np.sum(1.0 - (1.0 - np.asarray(probs)) ** k))


def occupancy_monte_carlo(probs, k, trials, rng):
    """Direct categorical resimulation of the number of distinct bins."""
    draws = rng.choice(len(probs), size=(trials, k), p=np.asarray(probs) / np.sum(probs))
    return np.array([len(set(row)) for row in draws])
