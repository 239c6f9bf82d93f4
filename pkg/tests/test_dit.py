import numpy as np
import pytest

from tempogen.autodiff import Tensor, gradient_check
from tempogen.dit import (
    DiT,
    DiTConfig,
    FrameCountError,
    adaln,
    attention,
    concat_time_aligned,
    dit_block,
    feed_forward,
    layer_norm,
    sinusoidal_features,
)
from tempogen.autodiff import ShapeMismatchError

FD_TOL = 1e-4  # f64 budget for composite layers


def leaf(rng, *shape, scale=0.5):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


def toy_config(**kw):
    base = dict(layers=2, heads=2, hidden=16, cond_dim=8, frames=6, latent_dim=4,
                cfg_dropout=0.0)
    base.update(kw)
    return DiTConfig(**base)


def random_block_params(rng, hidden, cond, ffn_mult=2):
    p = {}
    for mod in ("mod1", "mod2"):
        p[f"{mod}.w_scale"] = leaf(rng, hidden, hidden, scale=0.2)
        p[f"{mod}.b_scale"] = Tensor(1.0 + 0.1 * rng.standard_normal(hidden), requires_grad=True)
        p[f"{mod}.w_shift"] = leaf(rng, hidden, hidden, scale=0.2)
        p[f"{mod}.b_shift"] = leaf(rng, hidden, scale=0.2)
    for attn, kdim in (("self", hidden), ("cross", cond)):
        p[f"{attn}.wq"] = leaf(rng, hidden, hidden)
        p[f"{attn}.bq"] = leaf(rng, hidden, scale=0.1)
        p[f"{attn}.wk"] = leaf(rng, kdim, hidden)
        p[f"{attn}.bk"] = leaf(rng, hidden, scale=0.1)
        p[f"{attn}.wv"] = leaf(rng, kdim, hidden)
        p[f"{attn}.bv"] = leaf(rng, hidden, scale=0.1)
        p[f"{attn}.wo"] = leaf(rng, hidden, hidden, scale=0.3)
        p[f"{attn}.bo"] = leaf(rng, hidden, scale=0.1)
    p["cat.w"] = leaf(rng, hidden + cond, hidden, scale=0.3)
    p["cat.b"] = leaf(rng, hidden, scale=0.1)
    p["ffn.w1"] = leaf(rng, hidden, ffn_mult * hidden)
    p["ffn.b1"] = leaf(rng, ffn_mult * hidden, scale=0.1)
    p["ffn.w2"] = leaf(rng, ffn_mult * hidden, hidden, scale=0.3)
    p["ffn.b2"] = leaf(rng, hidden, scale=0.1)
    return p


class TestAdaln:
    def test_identity_modulation_is_layer_norm(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.standard_normal((5, 8)))
        tau = Tensor(rng.standard_normal(8))
        w0 = Tensor(np.zeros((8, 8)))
        out = adaln(x, tau, w0, Tensor(np.ones(8)), w0, Tensor(np.zeros(8)))
        assert np.allclose(out.data, layer_norm(x).data)
        assert np.allclose(out.data.mean(axis=-1), 0.0, atol=1e-12)

    def test_constant_row_normalizes_to_zero(self):
        x = Tensor(np.full((3, 8), 2.5))
        tau = Tensor(np.zeros(8))
        w0 = Tensor(np.zeros((8, 8)))
        out = adaln(x, tau, w0, Tensor(np.ones(8)), w0, Tensor(np.zeros(8)))
        assert np.allclose(out.data, 0.0)

    def test_gradients(self):
        rng = np.random.default_rng(1)
        x = leaf(rng, 4, 8)
        tau = leaf(rng, 8)
        w_scale, b_scale = leaf(rng, 8, 8, scale=0.2), leaf(rng, 8, scale=0.2)
        w_shift, b_shift = leaf(rng, 8, 8, scale=0.2), leaf(rng, 8, scale=0.2)
        probe = Tensor(rng.standard_normal((4, 8)))

        def loss():
            return (adaln(x, tau, w_scale, b_scale, w_shift, b_shift) * probe).sum()

        err = gradient_check(loss, [x, tau, w_scale, b_scale, w_shift, b_shift])
        assert err < FD_TOL


class TestAttention:
    def params(self, rng, hidden=8, kdim=8):
        return dict(
            wq=leaf(rng, hidden, hidden), bq=leaf(rng, hidden, scale=0.1),
            wk=leaf(rng, kdim, hidden), bk=leaf(rng, hidden, scale=0.1),
            wv=leaf(rng, kdim, hidden), bv=leaf(rng, hidden, scale=0.1),
            wo=leaf(rng, hidden, hidden), bo=leaf(rng, hidden, scale=0.1),
        )

    def test_single_key_collapses_softmax(self):
        rng = np.random.default_rng(2)
        p = self.params(rng)
        q_in = Tensor(rng.standard_normal((5, 8)))
        kv = Tensor(rng.standard_normal((1, 8)))
        out = attention(q_in, kv, kv, 2, **p)
        expected = ((kv @ p["wv"] + p["bv"]) @ p["wo"] + p["bo"]).data
        assert np.allclose(out.data, np.tile(expected, (5, 1)))

    def test_key_value_permutation_invariance(self):
        rng = np.random.default_rng(3)
        p = self.params(rng)
        q_in = Tensor(rng.standard_normal((4, 8)))
        kv = rng.standard_normal((6, 8))
        perm = rng.permutation(6)
        out = attention(q_in, Tensor(kv), Tensor(kv), 2, **p)
        out_p = attention(q_in, Tensor(kv[perm]), Tensor(kv[perm]), 2, **p)
        assert np.allclose(out.data, out_p.data, atol=1e-12)

    def test_mask_hides_keys(self):
        rng = np.random.default_rng(4)
        p = self.params(rng)
        q_in = Tensor(rng.standard_normal((1, 4, 8)))
        kv = rng.standard_normal((6, 8))
        mask = np.zeros((1, 1, 1, 6))
        mask[..., 4:] = -1e9
        masked = attention(q_in, Tensor(kv[None]), Tensor(kv[None]), 2, **p, mask=mask)
        truncated = attention(q_in, Tensor(kv[None, :4]), Tensor(kv[None, :4]), 2, **p)
        assert np.allclose(masked.data, truncated.data, atol=1e-9)

    def test_gradients_toy_shape(self):
        rng = np.random.default_rng(5)
        p = self.params(rng)
        q_in = leaf(rng, 3, 8)
        kv = leaf(rng, 4, 8)
        probe = Tensor(rng.standard_normal((3, 8)))

        def loss():
            return (attention(q_in, kv, kv, 2, **p) * probe).sum()

        err = gradient_check(loss, [q_in, kv, *p.values()])
        assert err < FD_TOL

    def test_shape_guards(self):
        rng = np.random.default_rng(6)
        p = self.params(rng)
        with pytest.raises(ShapeMismatchError):
            attention(
                Tensor(rng.standard_normal((3, 8))),
                Tensor(rng.standard_normal((4, 8))),
                Tensor(rng.standard_normal((5, 8))),
                2, **p,
            )


class TestConcatTimeAligned:
    def test_zero_matrix_with_identity_init(self):
        rng = np.random.default_rng(7)
        hidden, cond = 8, 4
        a = Tensor(rng.standard_normal((6, hidden)))
        t_mat = Tensor(np.zeros((6, cond)))
        w = Tensor(np.concatenate([np.eye(hidden), np.zeros((cond, hidden))]))
        out = concat_time_aligned(a, t_mat, w, Tensor(np.zeros(hidden)))
        assert np.allclose(out.data, a.data)

    def test_row_swap_equivariance(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((6, 8))
        t = rng.standard_normal((6, 4))
        w = leaf(rng, 12, 8)
        b = leaf(rng, 8, scale=0.1)
        out = concat_time_aligned(Tensor(a), Tensor(t), w, b).data
        swap = np.arange(6)
        swap[[1, 4]] = [4, 1]
        out_sw = concat_time_aligned(Tensor(a[swap]), Tensor(t[swap]), w, b).data
        assert np.allclose(out[swap], out_sw)

    def test_frame_mismatch(self):
        rng = np.random.default_rng(9)
        w = leaf(rng, 12, 8)
        with pytest.raises(FrameCountError):
            concat_time_aligned(
                Tensor(rng.standard_normal((6, 8))),
                Tensor(rng.standard_normal((5, 4))),
                w, Tensor(np.zeros(8)),
            )

    def test_gradients(self):
        rng = np.random.default_rng(10)
        a, t = leaf(rng, 5, 8), leaf(rng, 5, 4)
        w, b = leaf(rng, 12, 8), leaf(rng, 8, scale=0.1)
        probe = Tensor(rng.standard_normal((5, 8)))

        def loss():
            return (concat_time_aligned(a, t, w, b) * probe).sum()

        assert gradient_check(loss, [a, t, w, b]) < FD_TOL


class TestFeedForward:
    def test_gradients(self):
        rng = np.random.default_rng(11)
        x = leaf(rng, 4, 8)
        w1, b1 = leaf(rng, 8, 16), leaf(rng, 16, scale=0.1)
        w2, b2 = leaf(rng, 16, 8), leaf(rng, 8, scale=0.1)
        probe = Tensor(rng.standard_normal((4, 8)))

        def loss():
            return (feed_forward(x, w1, b1, w2, b2) * probe).sum()

        assert gradient_check(loss, [x, w1, b1, w2, b2]) < FD_TOL


class TestDitBlock:
    def test_identity_at_fresh_init(self):
        config = toy_config()
        model = DiT(config, rng=0)
        rng = np.random.default_rng(12)
        x = rng.standard_normal((1, config.frames, config.hidden))
        t_mat = Tensor(rng.standard_normal((1, config.frames, config.cond_dim)))
        c = Tensor(rng.standard_normal((1, 3, config.cond_dim)))
        tau = Tensor(rng.standard_normal((1, config.hidden)))
        out = dit_block(Tensor(x), t_mat, c, tau, model.block_params(0), config.heads)
        assert np.allclose(out.data, x, atol=1e-12)

    def test_conditioning_is_frame_local_without_mixing(self):
        """With attention output projections zeroed (no cross-frame mixing) and
        a live concat projection, perturbing the timestamp matrix at frame i
        moves the output only at frame i."""
        rng = np.random.default_rng(13)
        hidden, cond, frames = 16, 8, 6
        p = random_block_params(rng, hidden, cond)
        p["self.wo"] = Tensor(np.zeros((hidden, hidden)), requires_grad=True)
        p["cross.wo"] = Tensor(np.zeros((hidden, hidden)), requires_grad=True)
        x = Tensor(rng.standard_normal((frames, hidden)))
        c = Tensor(rng.standard_normal((2, cond)))
        tau = Tensor(rng.standard_normal(hidden))
        t_mat = rng.standard_normal((frames, cond))
        base = dit_block(x, Tensor(t_mat), c, tau, p, heads=2).data
        for i in (0, 3, 5):
            bumped = t_mat.copy()
            bumped[i] += 1.0
            out = dit_block(x, Tensor(bumped), c, tau, p, heads=2).data
            delta = np.abs(out - base).max(axis=1)
            assert delta[i] > 1e-6
            others = np.delete(delta, i)
            assert np.all(others < 1e-12)

    def test_full_block_gradients(self):
        rng = np.random.default_rng(14)
        hidden, cond, frames = 16, 8, 6
        p = random_block_params(rng, hidden, cond)
        x = leaf(rng, frames, hidden)
        t_mat = leaf(rng, frames, cond)
        c = leaf(rng, 3, cond)
        tau = leaf(rng, hidden)
        probe = Tensor(rng.standard_normal((frames, hidden)))

        def loss():
            return (dit_block(x, t_mat, c, tau, p, heads=2) * probe).sum()

        err = gradient_check(loss, [x, t_mat, c, tau, *p.values()])
        assert err < FD_TOL


class TestModel:
    def test_forward_shapes_and_none_conditioning(self):
        config = toy_config()
        model = DiT(config, rng=1)
        rng = np.random.default_rng(15)
        x = rng.standard_normal((2, config.frames, config.latent_dim))
        t = np.array([0.3, 0.8])
        t_mats = [rng.standard_normal((config.frames, config.cond_dim)), None]
        caps = [rng.standard_normal((2, config.cond_dim)), None]
        out = model.forward(x, t, t_mats, caps)
        assert out.shape == (2, config.frames, config.latent_dim)

    def test_variable_caption_lengths_padded(self):
        config = toy_config()
        model = DiT(config, rng=1)
        rng = np.random.default_rng(16)
        x = rng.standard_normal((2, config.frames, config.latent_dim))
        t = np.array([0.5, 0.5])
        caps = [rng.standard_normal((1, config.cond_dim)),
                rng.standard_normal((4, config.cond_dim))]
        out = model.forward(x, t, [None, None], caps)
        assert out.shape == (2, config.frames, config.latent_dim)

    def test_padding_does_not_change_prediction(self):
        """A batch-mate with a longer caption must not alter another item's
        output (mask correctness)."""
        config = toy_config(layers=1)
        model = DiT(config, rng=2)
        # Give cross attention a live output path so caption features matter.
        model.params["blocks.0.cross.wo"].data = (
            0.3 * np.random.default_rng(0).standard_normal((config.hidden, config.hidden))
        )
        rng = np.random.default_rng(17)
        x = rng.standard_normal((1, config.frames, config.latent_dim))
        t = np.array([0.4])
        cap = rng.standard_normal((2, config.cond_dim))
        long_cap = rng.standard_normal((5, config.cond_dim))
        alone = model.forward(x, t, [None], [cap]).data
        paired = model.forward(
            np.concatenate([x, x]), np.array([0.4, 0.4]), [None, None], [cap, long_cap]
        ).data
        assert np.allclose(alone[0], paired[0], atol=1e-12)

    def test_frame_count_guard(self):
        config = toy_config()
        model = DiT(config, rng=1)
        x = np.zeros((1, config.frames, config.latent_dim))
        bad = np.zeros((config.frames + 1, config.cond_dim))
        with pytest.raises(FrameCountError):
            model.forward(x, np.array([0.5]), [bad], [None])

    def test_hidden_divisible_by_heads(self):
        with pytest.raises(ShapeMismatchError):
            DiTConfig(hidden=10, heads=4)

    def test_sinusoidal_features_shape(self):
        feats = sinusoidal_features(np.arange(5), 16)
        assert feats.shape == (5, 16)
        odd = sinusoidal_features(np.arange(5), 15)
        assert odd.shape == (5, 15)
