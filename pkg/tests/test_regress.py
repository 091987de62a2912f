import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphkernels.errors import ConditioningError, ConfigError, DataError, DomainError
from sphkernels.kernels import KernelSpec, kappa0_eval, kappa1_eval, kernel_eval
from sphkernels.regress import (
    ExperimentConfig,
    SphereDataset,
    TargetSpec,
    cell_rng,
    default_lambda_grid,
    experiment_synthetic,
    gram_matrix,
    ingest_csv,
    krr_fit,
    mean_curve,
    model_select,
    rf_features,
    rf_fit,
    ridge_path,
    table_to_csv,
    table_to_json,
    target_eval,
)
from sphkernels.sphharm import sample_sphere

W4 = np.array([0.0, 0.0, 0.0, 1.0])
F2_SUP = 1.0594038495960767  # scipy bounded minimization of -f2 on [0, 1]

PD_FAMILIES = [
    KernelSpec.arccos0(),
    KernelSpec.arccos1(),
    KernelSpec.rf(3),
    KernelSpec.ntk(2),
    KernelSpec.ntk(3, bias=True),
    KernelSpec.laplace(1.0),
    KernelSpec.genexp(1.0, 0.75),
    KernelSpec.step(3),
    KernelSpec.gauss(2.0),
    KernelSpec.linear(),
]


def cap_measure(d, s):
    """P(w.x >= s) for x uniform on S^{d-1}, d = 4 (density ~ sqrt(1 - u^2))."""
    assert d == 4
    anti = lambda u: 0.5 * (u * math.sqrt(1 - u * u) + math.asin(u))
    return (anti(1.0) - anti(s)) / (math.pi / 2)


# -- targets ------------------------------------------------------------------------

def test_target_examples():
    f1 = TargetSpec("indicator_cap", W4)
    f2 = TargetSpec("double_exp", W4)
    assert target_eval(f1, W4[None])[0] == 1.0
    assert target_eval(f2, W4[None])[0] == pytest.approx(1 + math.exp(-2 * math.sqrt(2)), rel=1e-15)
    X = sample_sphere(4, 500, 1)
    np.testing.assert_array_equal(target_eval(f2, X), target_eval(f2, -X))
    assert set(np.unique(target_eval(f1, X))) <= {0.0, 1.0}
    v = target_eval(f2, X)
    # the supremum is interior (u ~ 0.9928), slightly above the value at u = 1
    assert np.all(v > 0) and np.all(v <= F2_SUP + 1e-15)
    u = np.linspace(-1, 1, 20001)
    dense = target_eval(f2, np.column_stack([np.sqrt(1 - u**2), np.zeros((u.size, 2)), u]))
    assert dense.max() == pytest.approx(F2_SUP, rel=1e-9)
    assert dense.max() > 1 + math.exp(-2 ** 1.5)


def test_target_errors():
    with pytest.raises(DomainError):
        TargetSpec("indicator_cap", np.array([1.0, 1.0, 0, 0]))
    with pytest.raises(DomainError):
        target_eval(TargetSpec("indicator_cap", W4), np.ones((2, 3)) / math.sqrt(3))
    with pytest.raises(DomainError):
        TargetSpec("custom", W4)
    custom = TargetSpec("custom", W4, func=lambda u: u**2)
    assert target_eval(custom, W4[None])[0] == 1.0


def test_predicting_zero_on_f1_gives_cap_measure():
    X = sample_sphere(4, 200_000, 11)
    y = target_eval(TargetSpec("indicator_cap", W4), X)
    p = cap_measure(4, 0.7)
    assert p == pytest.approx(0.0941, abs=1e-4)
    assert abs(np.mean(y**2) - p) <= 3 * math.sqrt(p * (1 - p) / y.size)


# -- Gram matrices ------------------------------------------------------------------

def test_gram_examples():
    x = W4[None]
    assert gram_matrix(KernelSpec.rf(3), x)[0, 0] == 1.0
    assert gram_matrix(KernelSpec.ntk(4), x)[0, 0] == 4.0
    X = sample_sphere(3, 200, 5)
    G = gram_matrix(KernelSpec.rf(3), X)
    assert np.max(np.abs(G - G.T)) == 0.0
    assert np.linalg.eigvalsh(G).min() >= -1e-8


@pytest.mark.parametrize("spec", PD_FAMILIES, ids=str)
@pytest.mark.parametrize("d", [3, 4])
def test_gram_symmetric_psd(spec, d):
    X = sample_sphere(d, 200, 2)
    G = gram_matrix(spec, X)
    assert np.array_equal(G, G.T)
    assert np.linalg.eigvalsh(G).min() >= -1e-8 * np.trace(G) / G.shape[0]


def test_gram_cross_matrix_matches_pointwise():
    A, B = sample_sphere(3, 5, 0), sample_sphere(3, 7, 1)
    G = gram_matrix(KernelSpec.ntk(3), A, B)
    assert G.shape == (5, 7)
    assert G[2, 4] == pytest.approx(kernel_eval(KernelSpec.ntk(3), float(A[2] @ B[4])), rel=1e-15)


def test_gram_rejects_non_unit_rows():
    X = np.array([[1.0, 0, 0], [0, 2.0, 0]])
    with pytest.raises(DataError):
        gram_matrix(KernelSpec.linear(), X)
    with pytest.raises(DataError):
        gram_matrix(KernelSpec.linear(), X[:1], np.ones((1, 4)) / 2)


# -- ridge regression -----------------------------------------------------------------

def test_krr_antipodal_linear_closed_form():
    X = np.array([[1.0, 0, 0], [-1.0, 0, 0]])
    K = gram_matrix(KernelSpec.linear(), X)
    lam = 0.3
    model = krr_fit(K, np.array([1.0, -1.0]), lam, KernelSpec.linear(), X)
    # y is an eigenvector of K with eigenvalue 2: alpha = y / (2 + 2 lam)
    np.testing.assert_allclose(model.alpha, np.array([1.0, -1.0]) / (2 + 2 * lam), rtol=1e-14)
    assert model.predict(np.array([[0.0, 1.0, 0.0]]))[0] == pytest.approx(0.0, abs=1e-15)


def test_krr_large_lambda_bound():
    X = sample_sphere(4, 100, 3)
    y = np.random.default_rng(0).standard_normal(100)
    y -= y.mean()
    lam = 1e6
    model = krr_fit(gram_matrix(KernelSpec.rf(3), X), y, lam)
    assert np.linalg.norm(model.alpha) <= np.linalg.norm(y) / (100 * lam)


def test_krr_interpolates_at_tiny_lambda():
    X = sample_sphere(4, 150, 4)
    y = target_eval(TargetSpec("double_exp", W4), X)
    K = gram_matrix(KernelSpec.laplace(1.0), X)
    model = krr_fit(K, y, 1e-12, KernelSpec.laplace(1.0), X)
    assert np.max(np.abs(model.predict(X) - y)) <= 1e-4


@settings(max_examples=15, deadline=None)
@given(
    st.sampled_from(PD_FAMILIES),
    st.sampled_from([1e-10, 1e-6, 1e-3, 1.0]),
    st.integers(0, 2**16),
)
def test_krr_residual_invariant(spec, lam, seed):
    X = sample_sphere(4, 120, seed)
    y = np.random.default_rng(seed).standard_normal(120)
    K = gram_matrix(spec, X)
    model = krr_fit(K, y, lam)
    r = (K + 120 * lam * np.eye(120)) @ model.alpha - y
    assert np.linalg.norm(r) / np.linalg.norm(y) <= 1e-8
    assert model.residual <= 1e-8


def test_krr_rejects_bad_input():
    with pytest.raises(DomainError):
        krr_fit(np.eye(2), np.ones(2), 0.0)
    with pytest.raises(DataError):
        krr_fit(np.eye(3), np.ones(2), 1.0)
    with pytest.raises(ConditioningError):
        krr_fit(-np.eye(3) * 1e3, np.ones(3), 1e-6)


def test_ridge_path_matches_single_solves():
    X = sample_sphere(3, 80, 9)
    Xe = sample_sphere(3, 30, 10)
    y = target_eval(TargetSpec("indicator_cap", np.array([0, 0, 1.0])), X)
    spec = KernelSpec.ntk(2)
    K, Ke = gram_matrix(spec, X), gram_matrix(spec, Xe, X)
    lams = [1e-6, 1e-3, 1e-1]
    for lam, pred in zip(lams, ridge_path(K, y, lams, Ke)):
        ref = Ke @ krr_fit(K, y, lam).alpha
        np.testing.assert_allclose(pred, ref, atol=1e-8)


def test_default_lambda_grid():
    g = default_lambda_grid()
    assert g.size == 20 and g[0] == 1e-10 and g[-1] == 1.0


# -- model selection ---------------------------------------------------------------

def _split(n, seed, target="indicator_cap"):
    rng = np.random.default_rng(seed)
    t = TargetSpec(target, W4)
    Xtr, Xva = sample_sphere(4, n, rng), sample_sphere(4, 2000, rng)
    return SphereDataset(Xtr, target_eval(t, Xtr)), SphereDataset(Xva, target_eval(t, Xva))


def test_model_select_examples():
    tr, va = _split(100, 0)
    spec = KernelSpec.laplace(1.0)
    with pytest.raises(ConfigError):
        model_select(tr, va, spec, [1e-8, 1e-7], 1e-5)
    lam, err = model_select(tr, va, spec, [1e-3], 1e-5)
    assert lam == 1e-3 and err > 0
    lam, _ = model_select(tr, va, spec, default_lambda_grid(), 1e-5)
    assert lam >= 1e-5


def _mean_log_lambda(spec, n, lambda_min=1e-10):
    grid = default_lambda_grid()
    return np.mean([math.log10(model_select(*_split(n, s), spec, grid, lambda_min)[0]) for s in range(5)])


def test_model_select_lambda_weakly_decreases_with_n():
    spec = KernelSpec.rf(3)
    mean_log = [_mean_log_lambda(spec, n) for n in (64, 256, 1024)]
    assert mean_log[0] >= mean_log[1] >= mean_log[2]


def test_rough_kernels_select_near_interpolation():
    # validation error is flat near lambda -> 0 for the NTK on the cap target
    assert _mean_log_lambda(KernelSpec.ntk(2, bias=True), 1024) <= -5


# -- random features ------------------------------------------------------------------

def test_rf_relu_converges_to_kappa1():
    X = sample_sphere(3, 8, 0)
    F = rf_features(X, [100_000], "relu", seed=1)
    emp = F @ F.T
    exact = kernel_eval(KernelSpec.arccos1(), np.clip(X @ X.T, -1, 1))
    assert np.max(np.abs(emp - exact)) <= 0.01


def test_rf_step_converges_to_kappa0():
    X = sample_sphere(3, 8, 0)
    F = rf_features(X, [100_000], "step", seed=2)
    u = np.clip(X @ X.T, -1, 1)
    assert np.max(np.abs(F @ F.T - kappa0_eval(u))) <= 0.01


def test_rf_two_layers_converge_to_composition():
    X = sample_sphere(3, 6, 0)
    F = rf_features(X, [5000, 5000], "relu", seed=3)
    u = np.clip(X @ X.T, -1, 1)
    exact = kappa1_eval(kappa1_eval(u))
    assert np.max(np.abs(F @ F.T - exact)) <= 0.05


def test_rf_deviation_halves_when_width_quadruples():
    X = sample_sphere(3, 200, 7)
    pairs = np.arange(200).reshape(100, 2)
    exact = kappa1_eval(np.clip(np.einsum("ij,ij->i", X[pairs[:, 0]], X[pairs[:, 1]]), -1, 1))

    def mean_dev(m):
        devs = []
        for seed in range(6):
            F = rf_features(X, [m], "relu", seed=seed)
            devs.append(np.mean(np.abs(np.einsum("ij,ij->i", F[pairs[:, 0]], F[pairs[:, 1]]) - exact)))
        return np.mean(devs)

    ratio = mean_dev(8000) / mean_dev(2000)
    assert 0.35 <= ratio <= 0.65


def test_rf_features_deterministic_and_local():
    X = sample_sphere(4, 20, 0)
    a = rf_features(X, [64, 32], seed=5)
    b = rf_features(X, [64, 32], seed=5)
    assert np.array_equal(a, b)
    # a row's features depend only on that row
    np.testing.assert_allclose(rf_features(X[3:4], [64, 32], seed=5), a[3:4], rtol=1e-13, atol=1e-15)
    assert a.shape == (20, 32)


def test_rf_features_errors():
    X = sample_sphere(3, 2, 0)
    with pytest.raises(DomainError):
        rf_features(X, [0])
    with pytest.raises(DomainError):
        rf_features(X, [2, 2, 2])
    with pytest.raises(DomainError):
        rf_features(X, [4], activation="tanh")


def test_rf_fit_recovers_smooth_target():
    rng = np.random.default_rng(0)
    X, Xt = sample_sphere(4, 1000, rng), sample_sphere(4, 2000, rng)
    t = TargetSpec("double_exp", W4)
    model = rf_fit(X, target_eval(t, X), [400], 1e-6, seed=1)
    mse = np.mean((model.predict(Xt) - target_eval(t, Xt)) ** 2)
    assert mse < 0.1 * np.var(target_eval(t, Xt))


# -- symmetric designs -----------------------------------------------------------------

@pytest.mark.parametrize("spec", [KernelSpec.arccos1(), KernelSpec.ntk(2), KernelSpec.laplace(1.0)], ids=str)
def test_even_target_symmetrized_design_gives_even_predictor(spec):
    half = sample_sphere(4, 100, 8)
    X = np.vstack([half, -half])
    y = target_eval(TargetSpec("double_exp", W4), X)
    model = krr_fit(gram_matrix(spec, X), y, 1e-4, spec, X)
    Z = sample_sphere(4, 300, 9)
    assert np.max(np.abs(model.predict(Z) - model.predict(-Z))) <= 1e-6


# -- experiments -------------------------------------------------------------------------

def small_config(**kw):
    base = dict(n_grid=(32, 64, 128), test_size=500, seeds=2, lambda_mins=(1e-10, 1e-5))
    base.update(kw)
    return ExperimentConfig(**base)


def test_experiment_table_shape_and_determinism():
    cfg = small_config()
    rows = experiment_synthetic(cfg)
    assert len(rows) == 3 * 3 * 2 * 2
    assert rows == experiment_synthetic(cfg)
    kernels = {r["kernel"] for r in rows}
    assert kernels == {"ntk:L=2,bias=1,norm=0", "rf:L=3", "laplace:c=1.0"}
    for r in rows:
        assert r["lambda"] >= r["lambda_min"]
    text = table_to_csv(rows)
    assert text.splitlines()[0] == "kernel,n,lambda_min,seed,lambda,test_mse"
    assert text == table_to_csv(experiment_synthetic(cfg))
    assert table_to_json(rows, {"a": 1}).startswith("{")


def test_experiment_master_seed_changes_data():
    a = experiment_synthetic(small_config(seeds=1, n_grid=(32,)))
    b = experiment_synthetic(small_config(seeds=1, n_grid=(32,), master_seed=1))
    assert [r["test_mse"] for r in a] != [r["test_mse"] for r in b]


def test_experiment_rf_schedule():
    cfg = small_config(model="rf", kernels=("rf1", "rf2"), target="f2", seeds=1)
    rows = experiment_synthetic(cfg)
    assert {r["kernel"] for r in rows} == {"rf1", "rf2"}
    assert rows == experiment_synthetic(cfg)
    curve = mean_curve(rows, "rf1", 1e-10)
    assert sorted(curve) == [32, 64, 128]


@pytest.mark.parametrize(
    "kw",
    [
        dict(model="svm"),
        dict(target="f3"),
        dict(d=2),
        dict(n_grid=()),
        dict(lambda_mins=(10.0,)),
        dict(rf_schedule="cubic"),
        dict(model="rf", kernels=("rf3",)),
        dict(seeds=0),
    ],
)
def test_experiment_config_validation(kw):
    with pytest.raises(ConfigError):
        small_config(**kw).validate()


def test_experiment_rejects_unknown_kernel():
    with pytest.raises(Exception) as info:
        small_config(kernels=("relu",)).validate()
    assert getattr(info.value, "code", None) == "unknown-kernel"


def test_cell_rng_streams():
    a = cell_rng(0, "data", 1).standard_normal(4)
    assert np.array_equal(a, cell_rng(0, "data", 1).standard_normal(4))
    assert not np.array_equal(a, cell_rng(0, "data", 2).standard_normal(4))
    assert not np.array_equal(a, cell_rng(1, "data", 1).standard_normal(4))


# -- ingestion ---------------------------------------------------------------------------

def test_ingest_small_csv(tmp_path):
    p = tmp_path / "pts.csv"
    p.write_text("a,b,label\n3,4,1\n1,0,0\n0,2,1\n")
    ds = ingest_csv(p, label_column="label")
    assert ds.n == 3 and ds.d == 2 and ds.unit_norm
    np.testing.assert_allclose(ds.X[0], [0.6, 0.8])
    np.testing.assert_array_equal(ds.y, [1, 0, 1])
    assert ds.provenance["source"] == "ingested"


def test_ingest_without_normalization_fails_at_gram(tmp_path):
    p = tmp_path / "raw.csv"
    p.write_text("3,4\n1,0\n")
    ds = ingest_csv(p, normalize=False)
    assert not ds.unit_norm
    with pytest.raises(DataError):
        gram_matrix(KernelSpec.linear(), ds.X)


def test_ingest_shuffle_preserves_labels(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.standard_normal((50, 3))
    labels = np.arange(50)
    p = tmp_path / "shuf.csv"
    p.write_text("\n".join(",".join(repr(float(v)) for v in [*row, lab]) for row, lab in zip(data, labels)))
    ds = ingest_csv(p, label_column=3, shuffle_seed=4)
    assert not np.array_equal(ds.y, labels)
    unit = data / np.linalg.norm(data, axis=1, keepdims=True)
    np.testing.assert_allclose(ds.X, unit[ds.y.astype(int)], rtol=1e-15)


@pytest.mark.parametrize(
    "text,kw",
    [
        ("1,2\n0,0\n", {}),
        ("1,2\n2,x\n", {}),
        ("1,2\n3\n", {}),
        ("a,b\n1,2\n", {"label_column": "c"}),
        ("1,2\n3,4\n", {"label_column": 5}),
        ("", {}),
    ],
)
def test_ingest_errors(tmp_path, text, kw):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DataError):
        ingest_csv(p, **kw)


def test_dataset_invariants():
    with pytest.raises(DataError):
        SphereDataset(np.eye(3), np.ones(2))
    with pytest.raises(DataError):
        SphereDataset(np.eye(3), np.array([1.0, np.nan, 0.0]))
