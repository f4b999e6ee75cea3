import numpy as np
import pytest

from cotar import tensor as tt
from cotar.encoder import EncoderBlock, EncoderStack, block_forward, stack_forward
from cotar.tensor import ShapeError, Tensor, grad_check


@pytest.mark.parametrize("kind", ["cotar", "attention", "none"])
@pytest.mark.parametrize("pre_norm", [False, True])
def test_block_gradients(kind, pre_norm, rng):
    blk = EncoderBlock.init(6, rng, kind=kind, core_dim=2, dropout_rate=0.0, pre_norm=pre_norm)
    O = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
    probe = Tensor(rng.normal(size=(4, 6)))
    params = [p for _, p in blk.named_parameters()] + [O]
    assert grad_check(lambda: tt.sum(tt.mul(block_forward(blk, O), probe)), params).passed


def test_post_norm_output_is_normalized(rng):
    blk = EncoderBlock.init(8, rng, dropout_rate=0.0)
    y = block_forward(blk, Tensor(rng.normal(size=(5, 8)))).data
    assert np.allclose(y.mean(-1), 0, atol=1e-10)
    assert np.allclose(y.var(-1), 1, atol=1e-3)


def test_none_block_matches_manual_composition(rng):
    blk = EncoderBlock.init(4, rng, kind="none", dropout_rate=0.0)
    O = rng.normal(size=(3, 4))

    def ln(x):
        return (x - x.mean(-1, keepdims=True)) / np.sqrt(x.var(-1, keepdims=True) + 1e-5)

    def gelu(x):
        return 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x ** 3)))

    y = ln(O + O)
    ffn = gelu(y @ blk.ffn_W1.data) @ blk.ffn_W2.data
    assert np.allclose(block_forward(blk, Tensor(O)).data, ln(y + ffn), atol=1e-12)


def test_depth_zero_is_identity(rng):
    O = Tensor(rng.normal(size=(3, 4)))
    assert stack_forward(EncoderStack.init(0, 4, rng), O) is O


def test_stack_depth_and_gradients(rng):
    stack = EncoderStack.init(2, 4, rng, core_dim=1, dropout_rate=0.0)
    assert stack.depth == 2
    O = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    params = [p for _, p in stack.named_parameters()] + [O]
    assert grad_check(lambda: tt.sum(tt.gelu(stack_forward(stack, O))), params).passed


def test_eval_mode_is_deterministic(rng):
    blk = EncoderBlock.init(8, rng, dropout_rate=0.5)
    O = Tensor(rng.normal(size=(5, 8)))
    assert np.array_equal(block_forward(blk, O).data, block_forward(blk, O).data)


def test_training_dropout_uses_rng(rng):
    blk = EncoderBlock.init(8, rng, dropout_rate=0.5)
    O = Tensor(rng.normal(size=(5, 8)))
    a = block_forward(blk, O, True, np.random.default_rng(1)).data
    b = block_forward(blk, O, True, np.random.default_rng(1)).data
    c = block_forward(blk, O, True, np.random.default_rng(2)).data
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    with pytest.raises(ValueError):
        block_forward(blk, O, True, None)


def test_bad_inputs(rng):
    blk = EncoderBlock.init(4, rng)
    with pytest.raises(ShapeError):
        block_forward(blk, Tensor(np.zeros((3, 5))))
    with pytest.raises(ValueError):
        EncoderBlock.init(4, rng, dropout_rate=1.0)
    with pytest.raises(ValueError):
        EncoderStack([EncoderBlock.init(4, rng), EncoderBlock.init(6, rng)])
