import pytest
import torch

from avafford.attention import MultiHeadAttention, capture_attention
from avafford.errors import BadShapeError
from avafford.visual import FeaturePyramid, PyramidBackbone, PyramidEnhancer, VisualEncoder
from fdcheck import check_input_gradient

CH = (4, 8, 8, 16)


class TestBackbone:
    def test_level_schedule_512(self):
        torch.manual_seed(0)
        pyr = PyramidBackbone(CH)(torch.rand(1, 3, 512, 512))
        assert [tuple(l.shape[-2:]) for l in pyr.levels] == [(128, 128), (64, 64), (32, 32), (16, 16)]
        pyr.validate()

    def test_level_schedule_64(self):
        pyr = PyramidBackbone(CH)(torch.rand(2, 3, 64, 64))
        assert [tuple(l.shape[-2:]) for l in pyr.levels] == [(16, 16), (8, 8), (4, 4), (2, 2)]
        assert pyr.widths == CH

    def test_rejects_bad_dims(self):
        with pytest.raises(BadShapeError):
            PyramidBackbone(CH)(torch.rand(1, 3, 60, 64))

    def test_input_gradient_matches_finite_differences(self):
        torch.manual_seed(1)
        net = PyramidBackbone((2, 2, 4, 4)).double()
        x = torch.rand(1, 3, 32, 32, dtype=torch.float64)
        check_input_gradient(lambda t: sum(l.sum() for l in net(t).levels), x, rtol=1e-4)


class TestEnhancer:
    def make_pyr(self, b=1, hw=32, seed=0):
        torch.manual_seed(seed)
        sizes = [hw // 4, hw // 8, hw // 16, hw // 32]
        return FeaturePyramid([torch.rand(b, c, s, s) for c, s in zip(CH, sizes)])

    def test_shape_preserving(self):
        pyr = self.make_pyr(b=2, hw=64)
        out = PyramidEnhancer(CH)(pyr)
        for a, b in zip(out.levels, pyr.levels):
            assert a.shape == b.shape

    def test_zero_weights_are_identity(self):
        enh = PyramidEnhancer(CH)
        for p in enh.parameters():
            torch.nn.init.zeros_(p)
        pyr = self.make_pyr(hw=64, seed=2)
        out = enh(pyr)
        for a, b in zip(out.levels, pyr.levels):
            torch.testing.assert_close(a, b, rtol=0, atol=0)

    def test_coarsest_level_attention_rows_sum_to_one(self):
        enh = PyramidEnhancer(CH, n_layers=2)
        for seed in range(5):
            pyr = self.make_pyr(hw=64, seed=seed)
            with capture_attention() as maps:
                enh(pyr)
            assert len(maps) == 2
            for attn in maps:
                torch.testing.assert_close(attn.sum(-1), torch.ones_like(attn.sum(-1)), rtol=0, atol=1e-6)


class TestVisualEncoder:
    def test_common_width_output(self):
        enc = VisualEncoder(CH, width=8)
        pyr = enc(torch.rand(2, 3, 64, 64))
        assert pyr.widths == (8, 8, 8, 8)
        assert [tuple(l.shape[-2:]) for l in pyr.levels] == [(16, 16), (8, 8), (4, 4), (2, 2)]

    def test_finite(self):
        enc = VisualEncoder(CH, width=8)
        pyr = enc(torch.rand(1, 3, 64, 64))
        assert all(torch.isfinite(l).all() for l in pyr.levels)


class TestMultiHeadAttention:
    def test_uniform_when_keys_identical(self):
        torch.manual_seed(3)
        attn = MultiHeadAttention(8, n_heads=2)
        with torch.no_grad():
            attn.k_proj.weight.zero_()           # all keys identical -> uniform rows
            attn.v_proj.weight.copy_(torch.eye(8))
            attn.out_proj.weight.copy_(torch.eye(8))
        q = torch.rand(1, 3, 8)
        kv = torch.rand(1, 5, 8)
        out = attn(q, kv)
        expected = kv.mean(dim=1, keepdim=True).expand(1, 3, 8)
        torch.testing.assert_close(out, expected, rtol=0, atol=1e-6)

    def test_rows_sum_to_one_with_bias(self):
        torch.manual_seed(4)
        attn = MultiHeadAttention(8, n_heads=4)
        bias = torch.randn(1, 4, 1, 6)
        with capture_attention() as maps:
            attn(torch.randn(2, 3, 8), torch.randn(2, 6, 8), attn_bias=bias)
        (m,) = maps
        torch.testing.assert_close(m.sum(-1), torch.ones_like(m.sum(-1)), rtol=0, atol=1e-6)

    def test_large_negative_bias_selects_single_key(self):
        torch.manual_seed(5)
        attn = MultiHeadAttention(8, n_heads=2)
        with torch.no_grad():
            attn.v_proj.weight.copy_(torch.eye(8))
            attn.out_proj.weight.copy_(torch.eye(8))
        kv = torch.rand(1, 6, 8)
        j = 4
        bias = torch.full((1, 1, 1, 6), -1e4)
        bias[..., j] = 0.0
        out = attn(torch.rand(1, 3, 8), kv, attn_bias=bias)
        expected = kv[:, j].expand(1, 3, 8)
        torch.testing.assert_close(out, expected, rtol=0, atol=1e-3)
