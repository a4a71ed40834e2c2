import numpy as np
import pytest

from nlvar.errors import (
    DegenerateKernelError,
    DimensionMismatchError,
    NormFactorMissingError,
    NotPSDError,
)
from nlvar.kernels import (
    DEFAULT_DICTIONARY,
    KernelSpec,
    build_feature_stack,
    build_gram_stack,
    cross_gram,
    empirical_features,
    gram_matrix,
    kernel_eval,
    make_specs,
)


def test_eval_gaussian_at_zero_distance():
    spec = KernelSpec("gaussian", 0.5)
    u = np.array([1.0, -2.0, 0.3])
    assert kernel_eval(spec, u, u) == pytest.approx(1.0, abs=0)


def test_eval_linear_inner_product():
    assert kernel_eval(KernelSpec("linear"), [1.0, 2.0], [3.0, 4.0]) == 11.0


def test_eval_polynomial_inhomogeneous():
    # <u, v> = 2 -> (1 + 2)^2
    assert kernel_eval(KernelSpec("polynomial", 2), [2.0], [1.0]) == 9.0


def test_eval_rejects_mismatched_vectors():
    with pytest.raises(DimensionMismatchError):
        kernel_eval(KernelSpec("linear"), [1.0, 2.0], [1.0])


def test_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("polynomial", 1)
    with pytest.raises(ValueError):
        KernelSpec("gaussian", -0.5)
    with pytest.raises(ValueError):
        KernelSpec("sigmoid", 1.0)


def test_gram_trace_equals_sample_size():
    rng = np.random.default_rng(0)
    rows = rng.standard_normal((9, 4))
    for kind, param in DEFAULT_DICTIONARY:
        spec = KernelSpec(kind, param)
        G, rho = gram_matrix(spec, rows)
        assert abs(np.trace(G) - 9.0) < 1e-8
        assert spec.norm_factor == rho


def test_gram_gaussian_diagonal_constant():
    rng = np.random.default_rng(1)
    spec = KernelSpec("gaussian", 1.0)
    G, rho = gram_matrix(spec, rng.standard_normal((6, 3)))
    np.testing.assert_allclose(np.diag(G), rho, rtol=1e-12)


def test_gram_linear_orthonormal_rows_is_identity():
    spec = KernelSpec("linear")
    G, rho = gram_matrix(spec, np.eye(3))
    assert rho == pytest.approx(1.0)
    np.testing.assert_allclose(G, np.eye(3), atol=1e-15)


def test_gram_psd_and_symmetric_by_independent_eigensolver():
    rng = np.random.default_rng(2)
    rows = 2.0 * rng.standard_normal((6, 5))
    for kind, param in DEFAULT_DICTIONARY:
        G, _ = gram_matrix(KernelSpec(kind, param), rows)
        assert np.max(np.abs(G - G.T)) < 1e-10
        assert np.linalg.eigvalsh(G).min() >= -1e-8 * 6


def test_gram_degenerate_trace_raises():
    with pytest.raises(DegenerateKernelError):
        gram_matrix(KernelSpec("linear"), np.zeros((4, 3)))


def test_cross_gram_consistent_with_training():
    rng = np.random.default_rng(3)
    rows = rng.standard_normal((7, 2))
    spec = KernelSpec("polynomial", 3)
    G, _ = gram_matrix(spec, rows)
    np.testing.assert_allclose(cross_gram(spec, rows, rows), G, atol=1e-12)


def test_cross_gram_gaussian_peaks_at_matching_point():
    rng = np.random.default_rng(4)
    rows = rng.standard_normal((8, 3))
    spec = KernelSpec("gaussian", 1.0)
    _, rho = gram_matrix(spec, rows)
    block = cross_gram(spec, rows, rows[[5]])
    assert block.shape == (1, 8)
    assert np.argmax(block[0]) == 5
    assert block[0, 5] == pytest.approx(rho, rel=1e-12)


def test_cross_gram_matches_elementwise_oracle():
    rng = np.random.default_rng(5)
    train = rng.standard_normal((6, 4))
    test = rng.standard_normal((3, 4))
    for kind, param in DEFAULT_DICTIONARY:
        spec = KernelSpec(kind, param)
        gram_matrix(spec, train)
        block = cross_gram(spec, train, test)
        expected = np.array(
            [[spec.norm_factor * kernel_eval(spec, u, v) for v in train] for u in test]
        )
        np.testing.assert_allclose(block, expected, rtol=1e-12, atol=1e-14)


def test_cross_gram_requires_norm_factor():
    with pytest.raises(NormFactorMissingError):
        cross_gram(KernelSpec("linear"), np.ones((2, 2)), np.ones((1, 2)))


def test_features_identity():
    phi = empirical_features(np.eye(3))
    np.testing.assert_allclose(phi @ phi.T, np.eye(3), atol=1e-12)


def test_features_rank_one():
    phi = empirical_features(np.ones((2, 2)))
    assert phi.shape == (2, 1)
    np.testing.assert_allclose(np.abs(phi), np.ones((2, 1)), rtol=1e-12)


def test_features_reconstruct_random_psd():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((8, 8))
    K = A @ A.T
    phi = empirical_features(K)
    err = np.linalg.norm(phi @ phi.T - K) / np.linalg.norm(K)
    assert err < 1e-8


def test_features_drop_null_directions():
    A = np.random.default_rng(7).standard_normal((6, 2))
    K = A @ A.T  # rank 2
    phi = empirical_features(K)
    assert phi.shape[1] == 2
    assert np.linalg.norm(phi @ phi.T - K) / np.linalg.norm(K) < 1e-8


def test_features_reject_indefinite():
    K = np.diag([1.0, -0.5])
    with pytest.raises(NotPSDError):
        empirical_features(K)


def _embedded(rng, n=12, m=3, p=4):
    inputs = rng.standard_normal((n, m * p))
    partition_map = [[j * p + k for k in range(p)] for j in range(m)]
    return inputs, partition_map


def test_stack_layout_and_factor_fidelity():
    rng = np.random.default_rng(8)
    inputs, partition_map = _embedded(rng)
    stack = build_gram_stack(inputs, partition_map)
    assert stack.n_kernels == 3 * len(DEFAULT_DICTIONARY)
    assert stack.group_index[: len(DEFAULT_DICTIONARY)] == [
        (0, i) for i in range(len(DEFAULT_DICTIONARY))
    ]
    feats = build_feature_stack(stack)
    for K, phi in zip(stack.grams, feats.features):
        assert np.linalg.norm(phi @ phi.T - K) < 1e-8 * np.linalg.norm(K)


def test_partition_isolation():
    rng = np.random.default_rng(9)
    inputs, partition_map = _embedded(rng)
    stack = build_gram_stack(inputs, partition_map)
    perturbed = inputs.copy()
    perturbed[:, partition_map[1]] += rng.standard_normal((12, 4))
    perturbed[:, partition_map[2]] *= -2.0
    stack2 = build_gram_stack(perturbed, partition_map)
    nk = len(DEFAULT_DICTIONARY)
    for d in range(nk):  # partition 0 untouched -> bit-identical grams
        assert np.array_equal(stack.grams[d], stack2.grams[d])
    assert not np.array_equal(stack.grams[nk], stack2.grams[nk])


def test_full_partition_specs():
    specs, group_index = make_specs([None])
    assert len(specs) == len(DEFAULT_DICTIONARY)
    assert all(spec.partition is None for spec in specs)
    assert group_index == [(0, i) for i in range(len(DEFAULT_DICTIONARY))]
