import numpy as np
import pytest
from scipy.special import softmax

from blockmix.metrics import ari
from blockmix.model import (
    VARIANCE_FLOOR,
    DataMatrix,
    ModelSpec,
    ModelSpecError,
    Params,
    Partitions,
    complete_data_loglik,
)
from blockmix.sem import (
    ChainTrace,
    DegenerateFitError,
    EmptyClusterError,
    InitMethod,
    InternalSamplingError,
    SemConfig,
    SemGibbs,
    _cluster_keys,
    _label_switch_suspected,
    _most_frequent,
    fit,
    m_step,
    se_col_mu_probabilities,
    se_col_sigma_probabilities,
    se_row_probabilities,
)
from blockmix.simulate import generate, paper_sim_spec
from conftest import random_params, random_partitions


def covering_partitions(rng, n, p, G, Lmu, Lsigma):
    """Random partitions in which every cluster has members."""
    return Partitions(
        rng.permutation(np.arange(n) % G),
        rng.permutation(np.arange(p) % Lmu),
        rng.permutation(np.arange(p) % Lsigma),
    )


def _with_label(labels, index, value):
    out = np.array(labels)
    out[index] = value
    return out


# --- SE conditionals ---

def test_se_probabilities_match_cdll_oracle(rng):
    G, Lmu, Lsigma = 3, 2, 2
    for _ in range(10):
        theta = random_params(rng, G, Lmu, Lsigma)
        parts = random_partitions(rng, 5, 6, G, Lmu, Lsigma)
        x = DataMatrix(rng.normal(size=(5, 6)))
        i, j = int(rng.integers(5)), int(rng.integers(6))

        rows = [complete_data_loglik(x, Partitions(_with_label(parts.z, i, g), parts.w_mu, parts.w_sigma), theta)
                for g in range(G)]
        np.testing.assert_allclose(
            se_row_probabilities(x, parts.w_mu, parts.w_sigma, theta, i), softmax(rows), atol=1e-10
        )

        cols_mu = [complete_data_loglik(x, Partitions(parts.z, _with_label(parts.w_mu, j, l), parts.w_sigma), theta)
                   for l in range(Lmu)]
        np.testing.assert_allclose(
            se_col_mu_probabilities(x, parts.z, parts.w_sigma, theta, j), softmax(cols_mu), atol=1e-10
        )

        cols_sigma = [
            complete_data_loglik(x, Partitions(parts.z, parts.w_mu, _with_label(parts.w_sigma, j, l)), theta)
            for l in range(Lsigma)
        ]
        np.testing.assert_allclose(
            se_col_sigma_probabilities(x, parts.z, parts.w_mu, theta, j), softmax(cols_sigma), atol=1e-10
        )


def test_se_probabilities_sum_to_one(rng):
    for _ in range(50):
        theta = random_params(rng, 4, 3, 2)
        parts = random_partitions(rng, 7, 5, 4, 3, 2)
        x = DataMatrix(rng.normal(scale=10.0, size=(7, 5)))
        for probs in (
            se_row_probabilities(x, parts.w_mu, parts.w_sigma, theta, 0),
            se_col_mu_probabilities(x, parts.z, parts.w_sigma, theta, 4),
            se_col_sigma_probabilities(x, parts.z, parts.w_mu, theta, 2),
        ):
            assert abs(probs.sum() - 1.0) <= 1e-12
            assert np.all(probs >= 0)


def test_se_probabilities_follow_relabelling(rng):
    theta = random_params(rng, 3, 2, 3)
    parts = random_partitions(rng, 6, 7, 3, 2, 3)
    x = DataMatrix(rng.normal(size=(6, 7)))
    rp, mp, sp = np.array([2, 0, 1]), np.array([1, 0]), np.array([1, 2, 0])
    relabelled = theta.permuted(rp, mp, sp)
    z, w_mu, w_sigma = np.argsort(rp)[parts.z], np.argsort(mp)[parts.w_mu], np.argsort(sp)[parts.w_sigma]

    np.testing.assert_allclose(
        se_row_probabilities(x, w_mu, w_sigma, relabelled, 3),
        se_row_probabilities(x, parts.w_mu, parts.w_sigma, theta, 3)[rp],
        atol=1e-12,
    )
    np.testing.assert_allclose(
        se_col_mu_probabilities(x, z, w_sigma, relabelled, 5),
        se_col_mu_probabilities(x, parts.z, parts.w_sigma, theta, 5)[mp],
        atol=1e-12,
    )
    np.testing.assert_allclose(
        se_col_sigma_probabilities(x, z, w_mu, relabelled, 1),
        se_col_sigma_probabilities(x, parts.z, parts.w_mu, theta, 1)[sp],
        atol=1e-12,
    )


# --- M-step ---

def test_m_step_single_cluster_is_grand_mean_and_variance(rng):
    values = rng.normal(loc=2.0, scale=1.5, size=(9, 4))
    parts = Partitions(np.zeros(9, int), np.zeros(4, int), np.zeros(4, int))
    theta = m_step(DataMatrix(values), parts, ModelSpec(1, 1, 1))
    assert theta.mu[0, 0] == values.mean()
    assert theta.sigma2[0, 0] == values.var()
    assert theta.pi.tolist() == [1.0]


def test_m_step_hand_instance_hits_variance_floor():
    x = DataMatrix([[1.0, 1.0], [3.0, 3.0]])
    theta = m_step(x, Partitions([0, 1], [0, 0], [0, 0]), ModelSpec(2, 1, 1))
    assert theta.mu[:, 0].tolist() == [1.0, 3.0]
    assert theta.sigma2[:, 0].tolist() == [VARIANCE_FLOOR, VARIANCE_FLOOR]
    assert theta.pi.tolist() == [0.5, 0.5]


def test_m_step_matches_scalar_oracle(rng):
    x = rng.normal(size=(6, 8))
    parts = covering_partitions(rng, 6, 8, 2, 2, 2)
    theta = m_step(DataMatrix(x), parts, ModelSpec(2, 2, 2))
    for g in range(2):
        for l in range(2):
            cells = [x[i, j] for i in range(6) for j in range(8) if parts.z[i] == g and parts.w_mu[j] == l]
            assert theta.mu[g, l] == pytest.approx(sum(cells) / len(cells), abs=1e-12)
        for l in range(2):
            sq = [(x[i, j] - theta.mu[g, parts.w_mu[j]]) ** 2
                  for i in range(6) for j in range(8) if parts.z[i] == g and parts.w_sigma[j] == l]
            assert theta.sigma2[g, l] == pytest.approx(sum(sq) / len(sq), abs=1e-12)


def _perturbed_values(theta, eps, rng, sign):
    G, Lmu, Lsigma = theta.spec.as_tuple()
    mu = np.array(theta.mu)
    mu[rng.integers(G), rng.integers(Lmu)] += sign * eps
    sigma2 = np.array(theta.sigma2)
    sigma2[rng.integers(G), rng.integers(Lsigma)] += sign * eps
    pi = np.array(theta.pi)
    pi[0] += sign * eps
    pi[1] -= sign * eps
    rho_mu = np.array(theta.rho_mu)
    rho_mu[0] += sign * eps
    rho_mu[-1] -= sign * eps
    rho_sigma = np.array(theta.rho_sigma)
    rho_sigma[0] += sign * eps
    rho_sigma[-1] -= sign * eps
    return mu, sigma2, pi, rho_mu, rho_sigma


def test_m_step_maximises_variances_and_proportions(rng):
    spec = ModelSpec(2, 2, 3)
    for _ in range(100):
        x = DataMatrix(rng.normal(size=(8, 9)))
        parts = covering_partitions(rng, 8, 9, *spec.as_tuple())
        theta = m_step(x, parts, spec)
        base = complete_data_loglik(x, parts, theta)
        for sign in (-1.0, 1.0):
            _, sigma2, pi, rho_mu, rho_sigma = _perturbed_values(theta, 1e-3, rng, sign)
            for perturbed in (
                Params(theta.pi, theta.rho_mu, theta.rho_sigma, theta.mu, sigma2),
                Params(pi, theta.rho_mu, theta.rho_sigma, theta.mu, theta.sigma2),
                Params(theta.pi, rho_mu, theta.rho_sigma, theta.mu, theta.sigma2),
                Params(theta.pi, theta.rho_mu, rho_sigma, theta.mu, theta.sigma2),
            ):
                assert complete_data_loglik(x, parts, perturbed) <= base


def test_m_step_maximises_means_within_one_variance_block(rng):
    # every cell of a mean block shares one variance when the variance partition has one cluster
    spec = ModelSpec(2, 3, 1)
    for _ in range(100):
        x = DataMatrix(rng.normal(size=(8, 9)))
        parts = covering_partitions(rng, 8, 9, *spec.as_tuple())
        theta = m_step(x, parts, spec)
        base = complete_data_loglik(x, parts, theta)
        for sign in (-1.0, 1.0):
            mu, _, _, _, _ = _perturbed_values(theta, 1e-3, rng, sign)
            perturbed = Params(theta.pi, theta.rho_mu, theta.rho_sigma, mu, theta.sigma2)
            assert complete_data_loglik(x, parts, perturbed) <= base


def test_m_step_names_empty_cluster(small_matrix):
    parts = Partitions([0, 0, 0], [0, 1, 0, 1], [0, 0, 0, 0])
    with pytest.raises(EmptyClusterError) as info:
        m_step(small_matrix, parts, ModelSpec(1, 2, 2))
    assert info.value.axis == "columns_sigma"
    assert info.value.cluster == 1


# --- chain ---

def test_fit_is_deterministic(separated_data, quick_sem):
    x, _ = separated_data
    a = fit(x, ModelSpec(2, 2, 2), quick_sem)
    b = fit(x, ModelSpec(2, 2, 2), quick_sem)
    np.testing.assert_array_equal(a.partitions.z, b.partitions.z)
    np.testing.assert_array_equal(a.partitions.w_sigma, b.partitions.w_sigma)
    np.testing.assert_array_equal(a.theta_hat.mu, b.theta_hat.mu)
    np.testing.assert_array_equal(a.trace.cdll, b.trace.cdll)
    assert a.icl_bic == b.icl_bic


def test_fit_recovers_separated_partitions(separated_data):
    x, truth = separated_data
    result = fit(x, ModelSpec(2, 2, 2), SemConfig(burn_in=10, iterations=20, final_partition_runs=10, seed=5))
    assert ari(truth.z, result.partitions.z) == 1.0
    assert ari(truth.w_mu, result.partitions.w_mu) == 1.0
    assert ari(truth.w_sigma, result.partitions.w_sigma) == 1.0
    np.testing.assert_allclose(result.row_probs.sum(axis=1), 1.0)
    np.testing.assert_allclose(np.sort(result.theta_hat.pi), np.sort(np.bincount(truth.z) / x.n), atol=0.05)


def test_fit_with_kmeans_start(separated_data):
    x, truth = separated_data
    cfg = SemConfig(burn_in=5, iterations=10, final_partition_runs=5, seed=2, init="kmeans")
    assert cfg.init is InitMethod.KMEANS_ROWS
    result = fit(x, ModelSpec(2, 2, 2), cfg)
    assert ari(truth.z, result.partitions.z) == 1.0


def test_fit_single_cluster_reduces_to_grand_moments(rng, quick_sem):
    values = rng.normal(loc=-1.0, scale=2.0, size=(20, 6))
    x = DataMatrix(values)
    result = fit(x, ModelSpec(1, 1, 1), quick_sem)
    assert result.theta_hat.mu[0, 0] == values.mean()
    assert result.theta_hat.sigma2[0, 0] == values.var()
    assert set(result.partitions.z.tolist()) == {0}
    assert result.cdll == complete_data_loglik(x, result.partitions, result.theta_hat)
    assert result.icl_bic == pytest.approx(result.cdll - np.log(20 * 6))


def test_fit_rejects_spec_larger_than_data(small_matrix):
    with pytest.raises(ModelSpecError):
        fit(small_matrix, ModelSpec(4, 1, 1))
    with pytest.raises(ModelSpecError):
        fit(small_matrix, ModelSpec(1, 5, 1))


def test_tied_fit_shares_column_partition(separated_data, quick_sem):
    x, _ = separated_data
    result = fit(x, ModelSpec(2, 2, 2), quick_sem, tied=True)
    np.testing.assert_array_equal(result.partitions.w_mu, result.partitions.w_sigma)
    assert result.summary()["model"] == "traditional"
    assert result.summary()["spec"] == [2, 2]


def test_tied_fit_needs_equal_column_counts(separated_data):
    x, _ = separated_data
    with pytest.raises(ModelSpecError):
        fit(x, ModelSpec(2, 2, 3), tied=True)


def test_fit_accepts_initial_partitions(separated_data, quick_sem):
    x, truth = separated_data
    result = fit(x, ModelSpec(2, 2, 2), quick_sem, init_partitions=truth)
    assert ari(truth.z, result.partitions.z) == 1.0


def test_trace_records_every_sweep(separated_data, quick_sem):
    x, _ = separated_data
    result = fit(x, ModelSpec(2, 2, 2), quick_sem)
    assert len(result.trace) == quick_sem.burn_in + quick_sem.iterations
    frame = result.trace.to_frame()
    assert list(frame.columns[:4]) == ["iteration", "cdll", "pi_1", "pi_2"]
    assert {"rho_mu_2", "rho_sigma_1", "mu_2_1", "sigma2_1_2"} <= set(frame.columns)
    assert len(frame) == len(result.trace)
    np.testing.assert_allclose(result.theta_hat.mu, result.trace.mu[quick_sem.burn_in:].mean(axis=0))


def test_empty_cluster_policy(separated_data):
    x, _ = separated_data
    log_weights = np.tile([0.0, -np.inf], (x.n, 1))
    previous = np.arange(x.n) % 2

    chain = SemGibbs(x, ModelSpec(2, 2, 2), SemConfig(max_resample_attempts=3, on_empty="raise"))
    with pytest.raises(DegenerateFitError):
        chain._draw_conditional(log_weights, previous, 2, "rows", (1, 0, 0))

    chain = SemGibbs(x, ModelSpec(2, 2, 2), SemConfig(max_resample_attempts=3))
    labels = chain._draw_conditional(log_weights, previous, 2, "rows", (1, 0, 0))
    assert np.bincount(labels, minlength=2).tolist() == [x.n - 1, 1]


def test_conditional_draw_rejects_vanishing_weights(separated_data):
    x, _ = separated_data
    chain = SemGibbs(x, ModelSpec(2, 2, 2), SemConfig())
    log_weights = np.zeros((x.n, 2))
    log_weights[4] = -np.inf
    with pytest.raises(InternalSamplingError):
        chain._draw_conditional(log_weights, np.arange(x.n) % 2, 2, "rows", (1, 0, 0))


def test_cluster_keys_are_smallest_members():
    assert _cluster_keys(np.array([2, 0, 2, 1, 0]), 3).tolist() == [1, 3, 0]
    # empty clusters fall back to size + label
    assert _cluster_keys(np.array([1, 1, 1]), 3).tolist() == [3, 0, 5]


def test_most_frequent_breaks_ties_by_cluster_key():
    counts = np.array([[2.0, 2.0, 0.0], [0.0, 1.0, 3.0]])
    assert _most_frequent(counts, np.array([0, 1, 2])).tolist() == [0, 2]
    assert _most_frequent(counts, np.array([4, 1, 2])).tolist() == [1, 2]


@pytest.mark.parametrize("tied", [False, True])
def test_relabelled_start_gives_relabelled_chain(rng, tied):
    x, _ = generate(paper_sim_spec("sim1", n=60, p=20, seed=8))
    row_perm, mu_perm, sigma_perm = np.array([2, 0, 1]), np.array([1, 0]), np.array([2, 0, 1])
    if tied:
        spec, sigma_perm = ModelSpec(3, 2, 2), mu_perm
        start = covering_partitions(rng, 60, 20, 3, 2, 2)
        start = Partitions(start.z, start.w_mu, start.w_mu)
    else:
        spec = ModelSpec(3, 2, 3)
        start = covering_partitions(rng, 60, 20, 3, 2, 3)
    relabelled = Partitions(row_perm[start.z], mu_perm[start.w_mu], sigma_perm[start.w_sigma])
    cfg = SemConfig(burn_in=5, iterations=20, final_partition_runs=10, seed=21)

    a = fit(x, spec, cfg, tied=tied, init_partitions=start)
    b = fit(x, spec, cfg, tied=tied, init_partitions=relabelled)

    assert a.icl_bic == b.icl_bic
    assert a.cdll == b.cdll
    np.testing.assert_array_equal(a.trace.cdll, b.trace.cdll)
    np.testing.assert_array_equal(b.partitions.z, row_perm[a.partitions.z])
    np.testing.assert_array_equal(b.partitions.w_mu, mu_perm[a.partitions.w_mu])
    np.testing.assert_array_equal(b.partitions.w_sigma, sigma_perm[a.partitions.w_sigma])
    np.testing.assert_array_equal(b.theta_hat.mu[np.ix_(row_perm, mu_perm)], a.theta_hat.mu)
    np.testing.assert_array_equal(b.theta_hat.sigma2[np.ix_(row_perm, sigma_perm)], a.theta_hat.sigma2)
    np.testing.assert_array_equal(b.row_probs[:, row_perm], a.row_probs)
    assert a.label_switch_suspected == b.label_switch_suspected


def test_label_switch_diagnostic():
    def trace(mu):
        mu = np.asarray(mu, dtype=float)
        q = mu.shape[0]
        return ChainTrace(
            iteration=np.arange(q),
            pi=np.full((q, 2), 0.5),
            rho_mu=np.ones((q, 1)),
            rho_sigma=np.ones((q, 1)),
            mu=mu,
            sigma2=np.ones_like(mu),
            cdll=np.zeros(q),
        )

    stable = trace([[[0.0], [5.0]]] * 4)
    switched = trace([[[0.0], [5.0]], [[0.0], [5.0]], [[5.0], [0.0]], [[5.0], [0.0]]])
    assert not _label_switch_suspected(stable, 0)
    assert _label_switch_suspected(switched, 0)
    assert not _label_switch_suspected(switched, 2)


def test_sem_config_validation():
    with pytest.raises(ValueError):
        SemConfig(iterations=0)
    with pytest.raises(ValueError):
        SemConfig(burn_in=-1)
    with pytest.raises(ValueError):
        SemConfig(seed=-3)
    assert SemConfig().as_dict()["init"] == "random"
