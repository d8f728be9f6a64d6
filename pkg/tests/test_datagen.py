import numpy as np
import pytest

from tobit_iht.datagen import RNG_ALGORITHM, GenSpec, censoring_rate, generate, true_beta
from tobit_iht.errors import InvalidArgumentError
from tobit_iht.model import CensoredDataset, validate


def test_symmetric_censoring():
    spec = GenSpec(n=100_000, d=3, s0=0, beta0=0.0, sigma_star=1.0, seed=11)
    data, _ = generate(spec)
    assert abs(censoring_rate(data) - 0.5) <= 0.01


def test_bit_identical_repeat():
    a, _ = generate(GenSpec(seed=42))
    b, _ = generate(GenSpec(seed=42))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    c, _ = generate(GenSpec(seed=43))
    assert not np.array_equal(a.y, c.y)


def test_default_spec_censoring_band():
    rates = [censoring_rate(generate(GenSpec(seed=s))[0]) for s in range(50)]
    assert 0.35 <= min(rates) and max(rates) <= 0.55


def test_true_beta_pattern():
    beta = true_beta(GenSpec(d=6, s0=3))
    assert beta.tolist() == [0.5, 2.0, -2.0, 2.0, 0.0, 0.0, 0.0]
    beta = true_beta(GenSpec(d=4, s0=2, beta_nonzero=[(2, 1.5), (4, -1.0)], beta0=0.0))
    assert beta.tolist() == [0.0, 0.0, 1.5, 0.0, -1.0]


def test_latent_residuals():
    spec = GenSpec(n=50_000, d=5, s0=2, sigma_star=0.7, seed=3)
    data, truth, latent = generate(spec, return_latent=True)
    resid = latent - data.x @ truth.beta
    assert abs(resid.mean()) < 4 * 0.7 / np.sqrt(spec.n)
    assert resid.std() == pytest.approx(0.7, rel=0.02)
    assert np.array_equal(data.y, np.maximum(latent, spec.c0))
    validate(data)


def test_shards_rebuild_pooled():
    pooled, _ = generate(GenSpec(n=403, d=7, seed=9))
    shards, _ = generate(GenSpec(n=403, d=7, seed=9, shards=4))
    assert [s.machine_id for s in shards] == [0, 1, 2, 3]
    assert [s.data.n for s in shards] == [101, 101, 101, 100]
    assert np.array_equal(np.vstack([s.data.x for s in shards]), pooled.x)
    assert np.array_equal(np.concatenate([s.data.y for s in shards]), pooled.y)
    sized, _ = generate(GenSpec(n=403, d=7, seed=9, shards=2, shard_sizes=[3, 400]))
    assert [s.data.n for s in sized] == [3, 400]


def test_ar1_design_correlation():
    data, _ = generate(GenSpec(n=40_000, d=4, s0=1, design="ar1", rho=0.6, seed=1))
    corr = np.corrcoef(data.features[:, 0], data.features[:, 1])[0, 1]
    assert corr == pytest.approx(0.6, abs=0.02)


def test_threshold_shift():
    data, _ = generate(GenSpec(n=500, d=5, s0=2, c0=1.25, seed=2))
    assert data.c0 == 1.25 and np.all(data.y >= 1.25)
    assert np.array_equal(data.censored, data.y <= 1.25)


def test_censoring_rate_limits():
    all_unc = CensoredDataset.from_features([[0.0], [1.0]], [1.0, 2.0])
    all_cens = CensoredDataset.from_features([[0.0], [1.0]], [0.0, 0.0])
    assert censoring_rate(all_unc) == 0.0
    assert censoring_rate(all_cens) == 1.0


@pytest.mark.parametrize(
    "kwargs",
    [dict(n=0), dict(d=-1), dict(s0=200, d=100), dict(sigma_star=0.0), dict(design="blocks"),
     dict(rho=1.0, design="ar1"), dict(shards=0), dict(shards=2, shard_sizes=[1, 2])],
)
def test_invalid_specs(kwargs):
    with pytest.raises(InvalidArgumentError):
        GenSpec(**kwargs)


def test_rng_identifier():
    assert "philox" in RNG_ALGORITHM.lower()
    assert GenSpec(seed=5).to_dict()["seed"] == 5
