import numpy as np
import pytest

from gdca.tensor import DOUBLE, Tape, Tensor, finite_diff_grad, rel_error, zero_grad


def rand(rng, *shape, low=-1.0, high=1.0, requires_grad=False):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=requires_grad, precision=DOUBLE)


def grad_errors(fn, tensors, step=1e-6):
    """Relative error between autodiff and central differences for each input of ``fn``."""
    for t in tensors:
        t.requires_grad = True
        t.grad = None
    with Tape(DOUBLE) as tape:
        loss = fn(*tensors)
    tape.backward(loss)
    errs = []
    for i, t in enumerate(tensors):
        def f(x, i=i):
            args = list(tensors)
            args[i] = x
            return fn(*args)
        errs.append(rel_error(t.grad, finite_diff_grad(f, t, step)))
    return errs


def param_grad_errors(params, loss_fn, step=1e-6):
    """Same check for parameters held inside modules; perturbs each parameter in place."""
    zero_grad(params)
    with Tape(DOUBLE) as tape:
        loss = loss_fn()
    tape.backward(loss)
    errs = []
    for p in params:
        orig = p.data

        def f(x, p=p, orig=orig):
            p.data = x.data
            try:
                return loss_fn()
            finally:
                p.data = orig

        analytic = p.grad if p.grad is not None else np.zeros(p.shape)
        errs.append(rel_error(analytic, finite_diff_grad(f, p, step)))
    return errs


def sampled_grad_error(fn, x, n, rng, step=1e-6):
    """Central differences on ``n`` random coordinates of ``x`` against the autodiff gradient there.

    For inputs too large to difference in full within the time budget.
    """
    x.requires_grad, x.grad = True, None
    with Tape(DOUBLE) as tape:
        loss = fn(x)
    tape.backward(loss)
    flat = x.data.reshape(-1)
    idx = rng.choice(flat.size, size=min(n, flat.size), replace=False)
    fd = np.empty(idx.size)
    for j, i in enumerate(idx):
        vals = []
        for sgn in (1, -1):
            bumped = flat.copy()
            bumped[i] += sgn * step
            vals.append(fn(Tensor(bumped.reshape(x.shape), precision=DOUBLE)).item())
        fd[j] = (vals[0] - vals[1]) / (2 * step)
    return rel_error(x.grad.reshape(-1)[idx], fd)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL line per acceptance criterion, printed after the run
_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and rep.when == "call":
        _CRITERIA.append((marker.args[0], rep.passed, getattr(item, "criterion_detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))


@pytest.fixture
def detail(request):
    """Call with a short string to attach measured numbers to the criterion line."""
    def record(text: str):
        request.node.criterion_detail = text
    return record
