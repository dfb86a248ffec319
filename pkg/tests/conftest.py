import numpy as np
import pytest

from parampca import BinGrid, CoefficientSet, Dataset, Penalties, PpcaModel

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "invariant: property/invariant suite (acceptance criterion 7)")
    config.addinivalue_line("markers", "slow: long-running experiment")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")


def random_model(rng, B=3, K=3, V=2, counts=None, masks=None, grid=None, scale=1.0):
    """A model with random means/bases honouring placeholder and mask zeros."""
    grid = grid or BinGrid(np.cumsum(rng.uniform(0.5, 2.0, B)))
    means = rng.normal(size=(B, K)) * scale
    bases = rng.normal(size=(B, K, V)) * scale
    if counts is not None:
        counts = np.asarray(counts)
        for b in range(B):
            bases[b, :, counts[b]:] = 0.0
    if masks is not None:
        means = np.where(masks, means, 0.0)
        bases = np.where(masks[:, :, None], bases, 0.0)
    return PpcaModel(grid, means, bases, counts=counts, masks=masks)


def random_masks(rng, B, K):
    masks = rng.random((B, K)) < 0.7
    masks[np.arange(B), rng.integers(0, K, B)] = True
    return masks


def random_dataset(rng, grid, K, n):
    theta = rng.uniform(grid.lo, grid.hi, n)
    theta[: min(n, grid.n_endpoints)] = grid.endpoints[: min(n, grid.n_endpoints)]
    return Dataset(rng.normal(size=(n, K)), theta)


def random_instance(rng, B=3, K=3, V=2, n=15, varied=False, masked=False, penalties=None):
    counts = rng.integers(1, V + 1, B) if varied else None
    masks = random_masks(rng, B, K) if masked else None
    model = random_model(rng, B, K, V, counts=counts, masks=masks)
    data = random_dataset(rng, model.grid, K, n)
    beta = rng.normal(size=(n, V))
    pen = penalties or Penalties(*rng.uniform(0.1, 2.0, 3))
    return model, data, CoefficientSet(beta), pen


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fd_gradients(model, data, coeffs, pen, rel_step=1e-6):
    """Central finite differences of the total energy over every free parameter.

    Returns (mean gradient, basis gradient); entries that are structurally
    zero (masked, placeholder) are left at 0.
    """
    from parampca.energy import energy_total

    def total(means, bases):
        return energy_total(model.replace(means=means, bases=bases), data, coeffs, pen).total

    gm = np.zeros_like(model.means)
    gb = np.zeros_like(model.bases)
    free_m = np.ones(model.means.shape, bool) if model.masks is None else model.masks
    free_b = model.slot_mask()[:, None, :] & free_m[:, :, None]
    for idx in zip(*np.nonzero(free_m)):
        h = rel_step * max(1.0, abs(model.means[idx]))
        up, dn = np.array(model.means), np.array(model.means)
        up[idx] += h
        dn[idx] -= h
        gm[idx] = (total(up, model.bases) - total(dn, model.bases)) / (2 * h)
    for idx in zip(*np.nonzero(free_b)):
        h = rel_step * max(1.0, abs(model.bases[idx]))
        up, dn = np.array(model.bases), np.array(model.bases)
        up[idx] += h
        dn[idx] -= h
        gb[idx] = (total(model.means, up) - total(model.means, dn)) / (2 * h)
    return gm, gb


def max_rel_error(g, ref):
    """Largest entrywise deviation relative to the reference's largest entry."""
    return float(np.max(np.abs(g - ref)) / max(np.max(np.abs(ref)), 1e-12))
