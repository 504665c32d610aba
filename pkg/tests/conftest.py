import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pbmor.matfun import AffineMatrixFn, StructuredSystem
from pbmor.scalarfun import ScalarFn


@pytest.fixture
def toy_siso():
    """K = s + mu, B = C = 1, N = 0.5; the 1x1 workhorse."""
    one = np.ones((1, 1))
    K = AffineMatrixFn([(ScalarFn.s_power(1), one), (ScalarFn.mu_power(0), one)])
    return StructuredSystem(
        C=AffineMatrixFn.constant(one),
        K=K,
        B=AffineMatrixFn.constant(one),
        N=[AffineMatrixFn.constant(0.5 * one)],
        d=1,
    )


@pytest.fixture
def toy_mimo():
    """K = diag(s+1, s+2), B = C = I, N1 strictly upper, N2 = 0."""
    eye = np.eye(2)
    K = AffineMatrixFn([(ScalarFn.s_power(1), eye),
                        (ScalarFn.const(1.0), np.diag([1.0, 2.0]))])
    return StructuredSystem(
        C=AffineMatrixFn.constant(eye),
        K=K,
        B=AffineMatrixFn.constant(eye),
        N=[AffineMatrixFn.constant(np.array([[0.0, 1.0], [0.0, 0.0]])),
           AffineMatrixFn.constant(np.zeros((2, 2)))],
        d=0,
    )


@pytest.fixture
def scalar_decay():
    """K = (s+1) I_1 with B = C = 1, N = 0.5; parameter-free."""
    one = np.ones((1, 1))
    K = AffineMatrixFn([(ScalarFn.s_power(1), one), (ScalarFn.const(1.0), one)])
    return StructuredSystem(
        C=AffineMatrixFn.constant(one),
        K=K,
        B=AffineMatrixFn.constant(one),
        N=[AffineMatrixFn.constant(0.5 * one)],
        d=0,
        structure="first-order",
    )
