import numpy as np
import pytest

from funnelrank.gradcheck import grad_check
from funnelrank.models import make_model
from funnelrank.tensor import Tensor, matmul, sum_all
from funnelrank.training import multitask_loss


def test_linear_model_exact():
    w = Tensor(np.array([[2.0]]), requires_grad=True)
    x = np.array([[3.0]])

    def loss_fn():
        return sum_all(matmul(Tensor(x), w))

    report = grad_check(loss_fn, {"w": w})
    assert report.entries[0].analytic == pytest.approx(3.0)
    assert report.entries[0].numeric == pytest.approx(3.0, abs=1e-9)
    assert report.max_rel_err < 1e-9
    assert report.passed


def test_mlp_bce_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    model = make_model("shared_bottom", tasks=2, input_dim=5, seed=0,
                       expert_widths=(6, 4), tower_widths=(3, 1))
    X = rng.normal(size=(8, 5))
    click = rng.integers(0, 2, size=(8, 1)).astype(float)
    Y = np.hstack([click, click * rng.integers(0, 2, size=(8, 1))])

    def loss_fn():
        return multitask_loss(model.forward(X), Y, (1.0, 1.0), model.regularized)

    report = grad_check(loss_fn, model.params(), tolerance=1e-4, step=1e-5)
    assert report.passed, f"worst {report.worst_param}: {report.max_rel_err}"


def test_seq_model_small_dims():
    rng = np.random.default_rng(1)
    model = make_model("seq", tasks=3, input_dim=6, seed=1, hidden=4)
    X = rng.normal(size=(6, 6))
    click = rng.integers(0, 2, size=(6, 1)).astype(float)
    cart = click * rng.integers(0, 2, size=(6, 1))
    Y = np.hstack([click, cart, cart * rng.integers(0, 2, size=(6, 1))])

    def loss_fn():
        return multitask_loss(model.forward(X), Y, (1.0, 1.0, 1.0), model.regularized)

    report = grad_check(loss_fn, model.params(), tolerance=1e-4, step=1e-5)
    assert report.passed, f"worst {report.worst_param}: {report.max_rel_err}"


def test_corrupted_gradient_is_flagged():
    w = Tensor(np.array([[1.0], [-0.5]]), requires_grad=True)
    x = np.array([[0.7, 0.2], [0.1, 0.9]])

    def loss_fn():
        return sum_all(matmul(Tensor(x), w))

    clean = grad_check(loss_fn, {"w": w})
    assert clean.passed

    corrupted = {"w": clean_grads_plus_delta(x)}
    report = grad_check(loss_fn, {"w": w}, analytic=corrupted)
    assert not report.passed
    assert report.worst_param == "w"
    offender = report.offenders()[0]
    assert offender.index == (0, 0)
    assert abs(offender.analytic - offender.numeric) == pytest.approx(0.1, abs=1e-7)


def clean_grads_plus_delta(x):
    true_grad = x.sum(axis=0).reshape(2, 1)
    bad = true_grad.copy()
    bad[0, 0] += 0.1
    return bad


@pytest.mark.filterwarnings("ignore:overflow")
def test_non_finite_forward_raises():
    from funnelrank.tensor import NonFiniteError, mul

    w = Tensor(np.array([[1e308]]), requires_grad=True)

    def loss_fn():
        return sum_all(mul(Tensor(np.array([[1e308]])), w))

    with pytest.raises(NonFiniteError):
        grad_check(loss_fn, {"w": w})


def test_report_sorted_descending():
    rng = np.random.default_rng(2)
    w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    x = rng.normal(size=(4, 3))

    def loss_fn():
        return sum_all(matmul(Tensor(x), w))

    report = grad_check(loss_fn, {"w": w})
    errs = [e.rel_err for e in report.entries]
    assert errs == sorted(errs, reverse=True)
    assert report.max_rel_err == errs[0]
