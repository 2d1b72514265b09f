import numpy as np
import pytest
from sklearn.base import clone

from olrl.envs import RolloutCounter, linear_env, pendulum_env, rollout_many
from olrl.models import (
    MAGIC,
    EnvModel,
    MLPDynamics,
    MlpConfig,
    PendulumModel,
    load_mlp,
    perturbed_pendulum_model,
    pink_noise_sequence,
    train_mlp_model,
    white_noise_perturb,
)


def fd_jacobians(model, x, u, h=1e-6):
    D, K = x.size, u.size
    A, B = np.empty((D, D)), np.empty((K, D))
    for i in range(D):
        e = np.zeros(D)
        e[i] = h
        A[i] = (model.predict_step(x + e, u) - model.predict_step(x - e, u)) / (2 * h)
    for k in range(K):
        e = np.zeros(K)
        e[k] = h
        B[k] = (model.predict_step(x, u + e) - model.predict_step(x, u - e)) / (2 * h)
    return A, B


@pytest.fixture(scope="module")
def pendulum_mlp():
    env = pendulum_env()
    counter = RolloutCounter()
    model = train_mlp_model(env, MlpConfig(), rng=0, counter=counter)
    return env, model, counter


# -- perturbed pendulum -----------------------------------------------------------

def test_unperturbed_model_is_the_environment():
    env = pendulum_env()
    model = perturbed_pendulum_model(s=0.0, rng_seed=3)
    rng = np.random.default_rng(0)
    X, U = rng.normal(size=(20, 4)), rng.normal(size=(20, 1))
    assert np.array_equal(model.predict_batch(X, U), env.step_batch(X, U))


def test_perturbed_multipliers_reproducible():
    a = perturbed_pendulum_model(s=0.1, rng_seed=42)
    b = perturbed_pendulum_model(s=0.1, rng_seed=42)
    assert np.array_equal(a.multipliers, b.multipliers)
    assert not np.array_equal(a.multipliers, np.ones(5))
    np.testing.assert_allclose(a.params.physical, a.multipliers * PendulumModel().params.physical)


def test_lognormal_mean():
    s = 0.5
    rng = np.random.default_rng(0)
    xi = np.array([perturbed_pendulum_model(s=s, rng_seed=int(k)).multipliers
                   for k in rng.integers(2**32, size=20000)])
    # 10^5 draws: 20000 models with five multipliers each
    assert xi.mean() == pytest.approx(np.exp(s ** 2 / 2), rel=0.01)


def test_perturbed_rejects_negative_scale():
    with pytest.raises(ValueError):
        perturbed_pendulum_model(s=-0.1)


@pytest.mark.parametrize("model", [PendulumModel(), perturbed_pendulum_model(s=0.2, rng_seed=1)])
def test_pendulum_model_jacobians_consistent(model):
    rng = np.random.default_rng(1)
    for _ in range(5):
        x, u = rng.normal(size=4), rng.normal(size=1)
        A, B = model.jacobians(x, u)
        Af, Bf = fd_jacobians(model, x, u)
        np.testing.assert_allclose(A, Af, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(B, Bf, rtol=1e-5, atol=1e-8)


def test_env_model_matches_env():
    env = linear_env(np.eye(2) * 0.5, np.ones((2, 1)), [1, -1], 5)
    model = EnvModel(env)
    U = np.random.default_rng(0).normal(size=(5, 1))
    X = model.imagine(env.spec.x0, U)
    np.testing.assert_array_equal(X, rollout_many(env, U)[0][0])
    np.testing.assert_allclose(model.imagine(np.array([1.0, -1.0]) + 0.0, U), X)


# -- noise ------------------------------------------------------------------------

def test_pink_noise_variance_and_mean():
    # one 1/f realization keeps ~11% spread in its sample variance at any length,
    # so the moments are pooled over many rollout-length sequences
    rng = np.random.default_rng(0)
    x = np.stack([pink_noise_sequence(100, 1, 0.3, rng) for _ in range(2000)])
    assert np.var(x) == pytest.approx(0.09, rel=0.1)
    assert np.abs(x.mean(axis=1)).max() < 1e-12


def test_pink_noise_spectrum_slope():
    rng = np.random.default_rng(1)
    T = 1024
    P = np.zeros(T // 2 + 1)
    for _ in range(100):
        P += np.abs(np.fft.rfft(pink_noise_sequence(T, 1, 1.0, rng)[:, 0])) ** 2
    f = np.fft.rfftfreq(T)
    band = (f >= 0.01) & (f <= 0.1)
    slope = np.polyfit(np.log(f[band]), np.log(P[band]), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.3)


def test_pink_noise_columns_independent():
    rng = np.random.default_rng(2)
    x = np.concatenate([pink_noise_sequence(100, 2, 1.0, rng) for _ in range(1000)])
    assert abs(np.corrcoef(x.T)[0, 1]) <= 0.1


def test_pink_noise_seeded():
    assert np.array_equal(pink_noise_sequence(50, 2, 1.0, 9), pink_noise_sequence(50, 2, 1.0, 9))
    with pytest.raises(ValueError):
        pink_noise_sequence(50, 1, 0.0, 0)


def test_white_noise():
    base = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(white_noise_perturb(base, 0.0, 1), base)
    out = white_noise_perturb(np.zeros(100_000), 0.25, 3)
    assert out.std() == pytest.approx(0.25, rel=0.01)
    assert np.array_equal(white_noise_perturb(base, 0.1, 5), white_noise_perturb(base, 0.1, 5))
    with pytest.raises(ValueError):
        white_noise_perturb(base, -1.0, 0)


# -- MLP --------------------------------------------------------------------------

def test_mlp_config_validation():
    with pytest.raises(ValueError):
        MlpConfig(hidden=(16, 0))
    with pytest.raises(ValueError):
        MlpConfig(epochs=0)
    with pytest.raises(ValueError):
        MlpConfig(activation="relu")
    cfg = MlpConfig()
    assert (cfg.hidden, cfg.epochs, cfg.batch_size, cfg.step_size, cfg.weight_decay, cfg.rollout_count) \
        == ((16, 16), 10, 100, 0.002, 0.001, 1000)


def test_mlp_is_sklearn_estimator():
    m = MLPDynamics(hidden=(8,), epochs=3, random_state=0)
    assert clone(m).get_params() == m.get_params()


def test_mlp_zero_network_is_identity():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 3))
    m = MLPDynamics(hidden=(4,), epochs=1, random_state=0).fit(X, X[:, :2] + 0.1 * X[:, 2:])
    m.theta_ = np.zeros_like(m.theta_)
    np.testing.assert_array_equal(m.predict(X), X[:, :2])


def test_mlp_learns_linear_system():
    rng = np.random.default_rng(1)
    A, B = np.array([[0.9, 0.1], [-0.2, 0.95]]), np.array([[0.5], [1.0]])
    X = rng.normal(size=(5000, 3))
    y = X[:, :2] @ A.T + X[:, 2:] @ B.T
    m = MLPDynamics(epochs=60, random_state=0).fit(X, y)
    Xt = rng.normal(size=(1000, 3))
    yt = Xt[:, :2] @ A.T + Xt[:, 2:] @ B.T
    assert np.mean((m.predict(Xt) - yt) ** 2) <= 1e-4
    Ah, Bh = m.jacobians(np.zeros(2), np.zeros(1))
    assert np.linalg.norm(Ah - A.T, 2) <= 0.1
    assert np.linalg.norm(Bh - B.T, 2) <= 0.1


def test_mlp_jacobians_match_finite_differences(pendulum_mlp):
    _, model, _ = pendulum_mlp
    rng = np.random.default_rng(2)
    for _ in range(10):
        x, u = rng.normal(size=4), rng.normal(size=1)
        A, B = model.jacobians(x, u)
        Af, Bf = fd_jacobians(model, x, u)
        np.testing.assert_allclose(A, Af, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(B, Bf, rtol=1e-5, atol=1e-8)


def test_mlp_imagine_matches_stepwise(pendulum_mlp):
    env, model, _ = pendulum_mlp
    U = np.random.default_rng(3).normal(0, 0.3, (100, 1))
    X = model.imagine(env.spec.x0, U)
    Y = env.spec.x0.copy()
    for t in range(0, 100, 25):
        np.testing.assert_allclose(X[t + 1], model.predict_step(X[t], U[t]), rtol=1e-12, atol=1e-12)
    assert np.array_equal(X[0], Y)


def test_pendulum_mlp_accuracy_and_rollout_count(pendulum_mlp):
    env, model, counter = pendulum_mlp
    assert counter.count == 1000
    rng = np.random.default_rng(4)
    U = np.stack([pink_noise_sequence(100, 1, 1.0, rng) for _ in range(100)])
    states, *_ = rollout_many(env, U)
    X = np.concatenate([states[:, :-1], U], axis=2).reshape(-1, 5)
    y = states[:, 1:].reshape(-1, 4)
    rmse = np.sqrt(np.mean((model.predict(X) - y) ** 2, axis=0))
    assert np.all(rmse <= 0.1 * y.std(axis=0))


def test_mlp_training_is_seeded():
    env = pendulum_env()
    cfg = MlpConfig(epochs=1, rollout_count=50)
    a = train_mlp_model(env, cfg, rng=5)
    b = train_mlp_model(env, cfg, rng=5)
    assert np.array_equal(a.theta_, b.theta_)


def test_save_load_roundtrip(tmp_path, pendulum_mlp):
    from olrl.models import save_mlp

    _, model, _ = pendulum_mlp
    path = tmp_path / "m.bin"
    save_mlp(model, path)
    assert path.read_bytes()[:16] == MAGIC == b"OLRL-MLP-v1\0\0\0\0\0"
    loaded = load_mlp(path)
    X = np.random.default_rng(6).normal(size=(10, 5))
    assert np.array_equal(loaded.predict(X), model.predict(X))
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nope" * 8)
    with pytest.raises(ValueError):
        load_mlp(bad)
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(ValueError):
        load_mlp(path)
