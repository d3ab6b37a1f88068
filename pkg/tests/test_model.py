import numpy as np
import numpy.testing as npt
import pytest

from surge_extrap.errors import ShapeError
from surge_extrap.model import NetSpec, TimeGAN, component_specs


@pytest.fixture(scope="module")
def gan():
    return TimeGAN(rows=5, cols=21, n_layers=3, hidden=8, seed=0)


def test_component_layer_counts():
    specs = component_specs(5, 256, 21)
    assert {k: v.n_gru_layers for k, v in specs.items()} == {
        "embedder": 5, "recovery": 5, "generator": 5, "supervisor": 4, "discriminator": 2}
    assert [specs[k].static_out for k in ("embedder", "recovery", "generator")] == [4, 2, 4]
    assert not specs["supervisor"].has_static_net and not specs["discriminator"].has_static_net


def test_spec_validation():
    with pytest.raises(ValueError):
        component_specs(1, 8, 3)
    with pytest.raises(ValueError):
        NetSpec("discriminator", 3, 8, 1, False)
    with pytest.raises(ValueError):
        NetSpec("embedder", 2, 8, 3, True, 3)


def test_shapes(gan, rng):
    c, x = rng.uniform(size=2), rng.uniform(size=(5, 21))
    s, h = gan.embed(c, x)
    assert s.shape == (4,) and h.shape == (5, 8)
    ch, xh = gan.recover(s, h)
    assert ch.shape == (2,) and xh.shape == (5, 21)
    assert ((xh > 0) & (xh < 1)).all() and ((ch > 0) & (ch < 1)).all()
    sg, e = gan.generate(c, rng.uniform(size=(5, gan.noise_dim)))
    assert sg.shape == (4,) and e.shape == (5, 8)
    assert gan.supervise(e).shape == (5, 8)
    p = gan.discriminate(h)
    assert isinstance(p, float) and 0 < p < 1
    assert gan.synthesize(c, rng.uniform(size=(5, 21))).shape == (5, 21)


def test_batch_matches_single(gan, rng):
    C, X = rng.uniform(size=(3, 2)), rng.uniform(size=(3, 5, 21))
    _, hb = gan.embed(C, X)
    for i in range(3):
        npt.assert_allclose(gan.embed(C[i], X[i])[1], hb[i], atol=1e-12)
    assert gan.discriminate(hb).shape == (3,)


def test_data_space_supervisor(rng):
    g = TimeGAN(5, 4, 2, 6, supervisor_space="data", seed=1)
    assert g.supervise(rng.uniform(size=(5, 6))).shape == (5, 4)
    assert g.synthesize(rng.uniform(size=2), rng.uniform(size=(5, 4))).shape == (5, 4)


def test_zero_weights_give_half(rng):
    g = TimeGAN(3, 4, 2, 5, seed=0)
    for comp in g.components().values():
        for arr in comp.params.values():
            arr[...] = 0.0
    _, x = g.recover(np.zeros(4), rng.normal(size=(3, 5)))
    npt.assert_array_equal(x, 0.5)
    assert g.discriminate(rng.normal(size=(3, 5))) == 0.5


def test_static_repeated_every_row(gan, rng):
    x = rng.uniform(size=(1, 5, 21))
    c = rng.uniform(size=(1, 2))
    out, _ = gan.embedder.forward(x, c)
    s = out["static"]
    # first GRU consumes [offsets | static]; zeroing static weights in the
    # first layer must make the result coordinate-independent
    W = gan.embedder.temporal[0].params
    saved = {k: v.copy() for k, v in W.items()}
    for k in ("Wz", "Wr", "Wh"):
        W[k][21:] = 0.0
    a = gan.embedder.forward(x, c)[0]["latent"]
    b = gan.embedder.forward(x, 1 - c)[0]["latent"]
    npt.assert_array_equal(a, b)
    for k, v in saved.items():
        W[k][...] = v
    assert s.shape == (1, 4)


def test_shape_errors(gan, rng):
    with pytest.raises(ShapeError):
        gan.embed(rng.uniform(size=2), rng.uniform(size=(4, 21)))
    with pytest.raises(ShapeError):
        gan.embed(rng.uniform(size=2), rng.uniform(size=(5, 20)))
    with pytest.raises(ValueError):
        gan.embed(np.array([1.5, 0.0]), rng.uniform(size=(5, 21)))


def test_seed_determinism(rng):
    a, b = TimeGAN(5, 3, 2, 4, seed=9), TimeGAN(5, 3, 2, 4, seed=9)
    for name, comp in a.components().items():
        for k, v in comp.params.items():
            npt.assert_array_equal(v, b.components()[name].params[k])
