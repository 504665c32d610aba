import numpy as np
import pytest

from pbmor.bench import gen_random_structured
from pbmor.matfun import AffineMatrixFn, SolveCache, StructuredSystem
from pbmor.scalarfun import ScalarFn
from pbmor.tf import (TransferRequest, eval_transfer, eval_transfer_deriv,
                      eval_transfer_param_grad, eval_transfer_siso, evaluate)

from oracles import (brute_force_transfer, fd_freq_deriv, fd_param_grad,
                     rel_err, unstructured_transfer)


class TestValues:
    def test_siso_level_one(self, toy_siso):
        assert eval_transfer(toy_siso, (0.0,), (1.0,))[0, 0] == pytest.approx(1.0)

    def test_siso_level_two(self, toy_siso):
        assert eval_transfer(toy_siso, (0.0, 0.0), (1.0,))[0, 0] == pytest.approx(0.5)

    def test_vanishing_couplings_kill_higher_levels(self, toy_mimo):
        sys = StructuredSystem(
            C=toy_mimo.C, K=toy_mimo.K, B=toy_mimo.B,
            N=[AffineMatrixFn.constant(np.zeros((2, 2)))] * 2, d=0)
        for k in (2, 3):
            assert np.allclose(eval_transfer(sys, (0.5j,) * k, ()), 0.0)

    def test_mimo_level_two_block_layout(self, toy_mimo):
        G = eval_transfer(toy_mimo, (0.0, 0.0), ())
        expected = np.zeros((2, 4))
        expected[0, 1] = 0.5
        assert np.allclose(G, expected)

    def test_result_size_guard(self, toy_mimo):
        with pytest.raises(ValueError, match="cap"):
            eval_transfer(toy_mimo, (1j,) * 4, (), max_entries=10)

    def test_request_validation(self):
        with pytest.raises(ValueError, match="derivative order"):
            TransferRequest(freqs=(1j, 2j), mu=(), orders=(1,))
        req = TransferRequest(freqs=(1j,), mu=(0.5,))
        assert req.level == 1


class TestBruteForceEquivalence:
    @pytest.mark.parametrize("seed,kind", [(0, "polynomial"), (1, "delay"),
                                           (2, "parametric-bilinear"), (3, "mixed")])
    def test_random_structured(self, seed, kind):
        rng = np.random.default_rng(seed)
        sys = gen_random_structured(seed, n=14, m=2, p=3, d=2, kind=kind)
        mu = tuple(rng.uniform(0, 1, 2))
        for k in (1, 2, 3):
            freqs = tuple(rng.uniform(0.1, 1.0) + 1j * rng.uniform(-1, 1)
                          for _ in range(k))
            a = eval_transfer(sys, freqs, mu)
            b = brute_force_transfer(sys, freqs, mu)
            assert rel_err(a, b) < 1e-10

    def test_three_inputs(self):
        sys = gen_random_structured(9, n=8, m=3, p=2, d=1, kind="polynomial")
        freqs = (0.2 + 0.3j, 0.1 - 0.7j, 0.9)
        a = eval_transfer(sys, freqs, (0.4,))
        b = brute_force_transfer(sys, freqs, (0.4,))
        assert a.shape == (2, 27)
        assert rel_err(a, b) < 1e-10


class TestSisoPath:
    def test_matches_general_path(self, toy_siso):
        for k in (1, 2, 3):
            freqs = tuple(0.1j * (i + 1) for i in range(k))
            full = eval_transfer(toy_siso, freqs, (1.0,))[0, 0]
            fast = eval_transfer_siso(toy_siso, freqs, (1.0,))
            assert abs(full - fast) <= 1e-12 * max(1.0, abs(full))

    def test_level_three_value(self, toy_siso):
        assert eval_transfer_siso(toy_siso, (0.0,) * 3, (1.0,)) == pytest.approx(0.25)

    def test_rejects_mimo(self, toy_mimo):
        with pytest.raises(ValueError, match="not SISO"):
            eval_transfer_siso(toy_mimo, (1j,), ())

    def test_random_siso_agreement(self):
        sys = gen_random_structured(11, n=12, m=1, p=1, d=2, kind="delay")
        freqs = (0.3 + 1j, 0.8, 0.2 - 0.5j)
        full = eval_transfer(sys, freqs, (0.3, 0.6))[0, 0]
        fast = eval_transfer_siso(sys, freqs, (0.3, 0.6))
        assert abs(full - fast) <= 1e-12 * abs(full)


class TestFrequencyDerivatives:
    def test_level_one_first_derivative(self, toy_siso):
        d = eval_transfer_deriv(toy_siso, (0.0,), (1.0,), (1,))
        assert d[0, 0] == pytest.approx(-1.0)

    def test_level_two_partial(self, toy_siso):
        d = eval_transfer_deriv(toy_siso, (0.0, 0.0), (1.0,), (1, 0))
        assert d[0, 0] == pytest.approx(-0.5)

    def test_zero_orders_reduce_to_value(self, toy_mimo):
        freqs = (0.3j, 1.0 + 0.2j)
        assert np.allclose(eval_transfer_deriv(toy_mimo, freqs, (), (0, 0)),
                           eval_transfer(toy_mimo, freqs, ()))

    def test_order_cap(self, toy_siso):
        with pytest.raises(ValueError, match="analytic derivative order"):
            eval_transfer_deriv(toy_siso, (0.0,), (1.0,), (3,))

    @pytest.mark.parametrize("orders", [(1,), (2,), (1, 0), (0, 1), (1, 1),
                                        (2, 0), (1, 1, 0), (0, 1, 1)])
    def test_matches_finite_differences(self, orders):
        sys = gen_random_structured(21, n=10, m=2, p=2, d=2, kind="mixed")
        mu = (0.4, 0.7)
        k = len(orders)
        freqs = tuple(0.4 + 0.1 * i + 0.5j for i in range(k))
        exact = eval_transfer_deriv(sys, freqs, mu, orders)
        # larger base step: second-order differences at 1e-6 sit in roundoff
        fd = fd_freq_deriv(lambda pts: eval_transfer(sys, pts, mu), freqs, orders,
                           step=1e-3)
        assert rel_err(exact, fd) < 1e-6


class TestParameterGradients:
    def test_toy_level_one(self, toy_siso):
        g = eval_transfer_param_grad(toy_siso, (0.0,), (1.0,))
        assert g[0][0, 0] == pytest.approx(-1.0)

    def test_toy_level_two(self, toy_siso):
        g = eval_transfer_param_grad(toy_siso, (0.0, 0.0), (1.0,))
        assert g[0][0, 0] == pytest.approx(-1.0)

    def test_parameter_free_system(self, toy_mimo):
        sys = StructuredSystem(C=toy_mimo.C, K=toy_mimo.K, B=toy_mimo.B,
                               N=list(toy_mimo.N), d=2)
        g = eval_transfer_param_grad(sys, (0.5j, 1j), (0.3, 0.4))
        assert np.allclose(g[0], 0) and np.allclose(g[1], 0)

    def test_parameter_dependent_output_map(self):
        one = np.ones((1, 1))
        sys = StructuredSystem(
            C=AffineMatrixFn([(ScalarFn.mu_power(0), one)]),
            K=AffineMatrixFn([(ScalarFn.s_power(1), one), (ScalarFn.const(1.0), one)]),
            B=AffineMatrixFn.constant(one),
            N=[AffineMatrixFn.constant(0.5 * one)], d=1)
        # G1 = mu/(s+1): dG1/dmu = 1/(s+1)
        g = eval_transfer_param_grad(sys, (1.0,), (3.0,))
        assert g[0][0, 0] == pytest.approx(0.5)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_matches_finite_differences(self, k):
        sys = gen_random_structured(31, n=10, m=2, p=2, d=2, kind="mixed")
        mu = (0.5, 0.2)
        freqs = tuple(0.5 + 0.2 * i + 0.8j for i in range(k))
        grads = eval_transfer_param_grad(sys, freqs, mu)
        for i in range(2):
            fd = fd_param_grad(lambda m: eval_transfer(sys, freqs, m), mu, i)
            assert rel_err(grads[i], fd) < 1e-6


def test_unstructured_specialization_matches_classical_formula():
    # pencil s*E - A with constant couplings reproduces the classical kernel
    rng = np.random.default_rng(41)
    n, m, p = 9, 2, 2
    E = np.eye(n) + 0.1 * rng.standard_normal((n, n))
    A = -np.eye(n) * 3 - 0.2 * rng.standard_normal((n, n))
    N_list = [0.2 * rng.standard_normal((n, n)) for _ in range(m)]
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    sys = StructuredSystem(
        C=AffineMatrixFn.constant(C),
        K=AffineMatrixFn([(ScalarFn.s_power(1), E), (ScalarFn.const(-1.0), A)]),
        B=AffineMatrixFn.constant(B),
        N=[AffineMatrixFn.constant(Nj) for Nj in N_list], d=0)
    for k in (1, 2, 3):
        freqs = tuple(0.5j * (i + 1) + 0.1 for i in range(k))
        ours = eval_transfer(sys, freqs, ())
        direct = unstructured_transfer(E, A, N_list, B, C, freqs)
        assert rel_err(ours, direct) < 1e-10


def test_evaluate_dispatch(toy_siso):
    value, grads = evaluate(toy_siso, TransferRequest(freqs=(0.0,), mu=(1.0,),
                                                      param_grad=True))
    assert value[0, 0] == pytest.approx(1.0)
    assert grads[0][0, 0] == pytest.approx(-1.0)
    deriv, _ = evaluate(toy_siso, TransferRequest(freqs=(0.0,), mu=(1.0,), orders=(1,)))
    assert deriv[0, 0] == pytest.approx(-1.0)


def test_cache_consistency(toy_siso):
    cache = SolveCache()
    a = eval_transfer(toy_siso, (0.3j, 0.1j), (1.0,), cache=cache)
    b = eval_transfer(toy_siso, (0.3j, 0.1j), (1.0,), cache=cache)
    c = eval_transfer(toy_siso, (0.3j, 0.1j), (1.0,))
    assert np.array_equal(a, b)
    assert rel_err(a, c) < 1e-14
