import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srmc.errors import ArgumentError
from srmc.semirandom import (
    AdversaryStrategy, ObservationSet, adversary_add, block_representative,
    counterexample_rank1, counterexample_rank2, incoherence, make_ground_truth,
    max_principal_angle, rank1_certificate, sample_uniform_observations,
    weighted_to_semirandom)

seeds = st.integers(0, 2 ** 31 - 1)


# ------------------------------------------------------------ ground truths

@pytest.mark.parametrize("profile", ["haar", "spiky"])
def test_ground_truth_spectrum_and_balance(profile):
    gt = make_ground_truth(40, 30, 3, spectrum=[5.0, 2.0, 1.0],
                           coherence_profile=profile, seed=2)
    np.testing.assert_allclose(np.linalg.svd(gt.M, compute_uv=False)[:3], [5, 2, 1])
    np.testing.assert_allclose(gt.U.T @ gt.U, np.diag([5.0, 2, 1]), atol=1e-12)
    np.testing.assert_allclose(gt.V.T @ gt.V, np.diag([5.0, 2, 1]), atol=1e-12)
    assert gt.kappa == pytest.approx(5.0)


def test_coherence_profiles_order():
    haar = make_ground_truth(60, 60, 2, coherence_profile="haar", seed=0).mu
    spiky = make_ground_truth(60, 60, 2, coherence_profile="spiky", seed=0, spike=0.6).mu
    flat = make_ground_truth(60, 60, 1, coherence_profile="flat").mu
    assert flat == pytest.approx(1.0)
    assert haar < spiky
    # a 0.6 spike puts at least 0.6 of a unit column on one row
    assert spiky >= 0.6 * 60 / 2


@pytest.mark.parametrize("kw", [{"r": 0}, {"r": 9}, {"spectrum": [1.0, 2.0]},
                                {"coherence_profile": "zipf"}])
def test_ground_truth_validation(kw):
    args = {"n1": 8, "n2": 8, "r": 2} | kw
    with pytest.raises(ArgumentError):
        make_ground_truth(**args)


def test_ground_truth_is_seeded():
    a = make_ground_truth(10, 9, 2, seed=5)
    b = make_ground_truth(10, 9, 2, seed=5)
    np.testing.assert_array_equal(a.M, b.M)


# -------------------------------------------------------------- sampling

def test_uniform_sampling_rate():
    gt = make_ground_truth(200, 200, 1, seed=0)
    obs = sample_uniform_observations(gt, 0.3, 1)
    assert abs(obs.size / 40000 - 0.3) < 4 * np.sqrt(0.3 * 0.7 / 40000)
    assert not obs.adversarial.any()
    M, mask = obs.dense()
    np.testing.assert_array_equal(M[mask], gt.M[mask])
    with pytest.raises(ArgumentError):
        sample_uniform_observations(gt, 0.0)


@settings(max_examples=25)
@given(seeds, st.sampled_from(["dense_rows", "probability_matrix", "block_pattern", "none"]))
def test_adversary_only_adds(seed, kind):
    gt = make_ground_truth(12, 12, 2, seed=seed % 1000)
    base = sample_uniform_observations(gt, 0.3, seed)
    rng = np.random.default_rng(seed)
    params = {"dense_rows": {"rows": [0, 3]},
              "probability_matrix": {"P": rng.uniform(0.3, 1.0, (12, 12)), "p": 0.3},
              "block_pattern": {"blocks": [[1.0, 3.0], [2.0, 1.0]], "p": 0.3},
              "none": {}}[kind]
    out = adversary_add(base, gt, AdversaryStrategy(kind, params, seed))
    assert np.all(out.mask[base.mask])
    assert np.array_equal(out.adversarial, ~np.isin(
        out.rows * 12 + out.cols, base.rows * 12 + base.cols))
    M, mask = out.dense()
    np.testing.assert_array_equal(M[mask], gt.M[mask])


def test_probability_matrix_marginals():
    # overall reveal rate of an entry is P_ij when the base rate is p
    gt = make_ground_truth(4, 4, 1, seed=0)
    P = np.full((4, 4), 0.3)
    P[0, 0] = 0.9
    hits = np.zeros((4, 4))
    trials = 4000
    for s in range(trials):
        base = sample_uniform_observations(gt, 0.3, s)
        out = adversary_add(base, gt, AdversaryStrategy("probability_matrix",
                                                        {"P": P, "p": 0.3}, 10 ** 6 + s))
        hits += out.mask
    freq = hits / trials
    assert abs(freq[0, 0] - 0.9) < 4 * np.sqrt(0.09 / trials)
    assert abs(freq[1:, 1:].mean() - 0.3) < 0.02


@pytest.mark.parametrize("kind,params", [
    ("probability_matrix", {"P": [[0.1]], "p": 0.3}),
    ("block_pattern", {"blocks": [[0.5]], "p": 0.3}),
    ("block_pattern", {"blocks": [[4.0]], "p": 0.3}),
    ("teleport", {}),
])
def test_adversary_validation(kind, params):
    with pytest.raises(ArgumentError):
        AdversaryStrategy(kind, params)


def test_strategy_dict_round_trip():
    s = AdversaryStrategy("block_pattern", {"blocks": np.array([[1.0, 2.0]]), "p": 0.2}, 4)
    s2 = AdversaryStrategy.from_dict(s.to_dict())
    assert s2.kind == s.kind and s2.seed == 4
    assert s2.params["blocks"] == [[1.0, 2.0]]


# ------------------------------------------------------------ observation IO

def test_observation_csv_round_trip(tmp_path):
    gt = make_ground_truth(7, 5, 2, seed=0)
    obs = adversary_add(sample_uniform_observations(gt, 0.5, 0), gt,
                        AdversaryStrategy("dense_rows", {"rows": [1]}, 0))
    obs.to_csv(tmp_path / "o.csv")
    back = ObservationSet.from_csv(tmp_path / "o.csv")
    assert back.same_as(obs)
    assert back.shape == (7, 5)


def test_observation_csv_requires_header(tmp_path):
    (tmp_path / "bad.csv").write_text("i,j,value,provenance\n0,0,1.0,random\n")
    with pytest.raises(ArgumentError):
        ObservationSet.from_csv(tmp_path / "bad.csv")


def test_observation_validation():
    with pytest.raises(ArgumentError):
        ObservationSet(2, 2, [0, 0], [1, 1], [1.0, 1.0])
    with pytest.raises(ArgumentError):
        ObservationSet(2, 2, [2], [0], [1.0])


# ------------------------------------------------------- counter-examples

def test_rank1_construction():
    gt, W, u = counterexample_rank1(6, 0.9)
    g = 1.81 / 0.19
    np.testing.assert_allclose(block_representative(W, (2, 2)), [[g, 1], [1, g]])
    np.testing.assert_array_equal(gt.M, np.ones((6, 6)))
    np.testing.assert_allclose(u[:3], 0.9)
    np.testing.assert_allclose(u[3:], -0.9)
    assert rank1_certificate(0.9) > 0
    # equals (4 beta^4 - 2) / (1 - beta^2): positive exactly when beta^4 > 1/2
    for b in (0.8, 0.84, 0.85, 0.9):
        assert rank1_certificate(b) == pytest.approx((4 * b ** 4 - 2) / (1 - b ** 2))
    assert rank1_certificate(0.85) > 0 > rank1_certificate(0.84)
    with pytest.raises(ArgumentError):
        counterexample_rank1(5)


def test_rank2_block_matrix_and_angle():
    gt, W = counterexample_rank2(8)
    rep = block_representative(W * gt.M, (4, 4))
    np.testing.assert_array_equal(rep, [[10, 5, 6, 3], [5, 10, 3, 6],
                                        [6, 3, 10, 5], [3, 6, 5, 10]])
    np.testing.assert_allclose(gt.sigma, [32.0, 8.0])
    np.testing.assert_allclose(np.linalg.svd(gt.M, compute_uv=False)[:3], [32, 8, 0], atol=1e-12)
    X, _, _ = np.linalg.svd(W * gt.M)
    assert max_principal_angle(X[:, :2], gt.U) == pytest.approx(90.0, abs=1e-8)


def test_principal_angle_examples():
    e = np.eye(3)
    assert max_principal_angle(e[:, :2], e[:, :2] @ [[1, 1], [0, 1]]) == pytest.approx(0.0)
    assert max_principal_angle(e[:, :1], e[:, 1:2]) == pytest.approx(90.0)
    v = np.array([[1.0], [1.0], [0.0]])
    assert max_principal_angle(e[:, :1], v) == pytest.approx(45.0)


def test_block_representative_detects_non_constant():
    A = np.kron(np.array([[1.0, 2], [3, 4]]), np.ones((2, 2)))
    np.testing.assert_array_equal(block_representative(A, (2, 2)), [[1, 2], [3, 4]])
    A[0, 0] = 9
    assert block_representative(A, (2, 2)) is None


def test_weighted_conversion():
    gt, W, _ = counterexample_rank1(40, 0.9)
    obs = weighted_to_semirandom(W, 0.1, gt, seed=3)
    # diagonal blocks are revealed at rate p g, off-diagonal ones at p
    m = obs.mask
    g = 1.81 / 0.19
    assert abs(m[:20, :20].mean() - 0.1 * g) < 0.08
    assert abs(m[:20, 20:].mean() - 0.1) < 0.06
    # the random layer is uniform at rate p; extras only where W > 1
    rnd = ~obs.adversarial
    assert abs(rnd.sum() / 1600 - 0.1) < 0.03
    adv_r, adv_c = obs.rows[obs.adversarial], obs.cols[obs.adversarial]
    assert np.all((adv_r < 20) == (adv_c < 20))
    with pytest.raises(ArgumentError):
        weighted_to_semirandom(W, 0.2, gt)
    with pytest.raises(ArgumentError):
        weighted_to_semirandom(W * 0.5, 0.1, gt)


def test_incoherence_reexport():
    assert incoherence(np.ones((4, 4)), 1) == pytest.approx(1.0)
