import numpy as np
import pytest

from masharp.errors import SpecError
from masharp.expression import Expression


def test_arithmetic_and_functions():
    e = Expression("1 + x1*x2 - exp(x1)/2 + pow(x2, 3) + sin(0)*cos(x1) + log(1 + x2*x2)")
    x = np.array([[0.3, -0.7]])
    want = 1 + 0.3 * -0.7 - np.exp(0.3) / 2 + (-0.7) ** 3 + np.log(1 + 0.49)
    assert e.evaluate(x)[0] == pytest.approx(want, rel=1e-15)


def test_constant_broadcasts():
    assert Expression("4").evaluate(np.zeros((5, 2))).tolist() == [4.0] * 5


def test_unary_minus():
    assert Expression("-x1").evaluate([[2.0, 0.0]])[0] == -2.0


@pytest.mark.parametrize("text", ["__import__('os')", "x1 ** 2", "x4", "abs(x1)", "x1 if x2 else 1", "'a'", "True", "exp(x1, x2)"])
def test_rejected(text):
    with pytest.raises(SpecError):
        Expression(text)


def test_third_variable_in_plane_rejected_at_evaluation():
    with pytest.raises(SpecError):
        Expression("x3").evaluate([[0.0, 0.0]])
