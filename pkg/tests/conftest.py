import numpy as np
import pytest

from dsnet.tensor import Tensor, backward, mul, sum_all


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (modified in place, then restored)."""
    g = np.zeros_like(x)
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


def rel_error(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def grad_check(op, *arrays, seed=0):
    """Worst relative error over inputs of ``op`` contracted with a fixed random weighting."""
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = op(*tensors)
    weights = Tensor(np.random.default_rng(seed).standard_normal(out.shape))

    def loss_value():
        return float((op(*[Tensor(t.data) for t in tensors]).data * weights.data).sum())

    backward(sum_all(mul(out, weights)))
    worst = 0.0
    for t in tensors:
        worst = max(worst, rel_error(t.grad, numeric_grad(loss_value, t.data)))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria register their verdicts here; printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
