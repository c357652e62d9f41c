"""Registered gradient-check cases for every differentiable op and model path.

Each case builds ``(f, inputs)`` from a seed with inputs drawn uniformly from
[-2, 2]; ``f`` contracts its output with fixed random weights so that every
output coordinate contributes to the checked scalar.
"""

from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Tensor
from .gradcheck import GradCheckReport, grad_check
from .model import (HpsmpModel, LstmParams, ModelConfig, attention_pool, blstm_forward,
                    global_attention, local_attention, lstm_step)

Case = Callable[[np.random.Generator], Tuple[Callable, List[Tensor]]]
CASES: Dict[str, Case] = {}
PATH_CASES: Dict[str, Case] = {}


def _u(rng, *shape, lo=-2.0, hi=2.0):
    return Tensor(rng.uniform(lo, hi, size=shape))


def _contract(out: Tensor, rng) -> Callable[[Tensor], Tensor]:
    w = Tensor(rng.uniform(-1, 1, size=out.shape))
    return lambda y: ad.tensor_sum(ad.hadamard(y, w))


def case(name, registry=CASES):
    def deco(fn):
        registry[name] = fn
        return fn
    return deco


def _wrap(rng, op, inputs):
    with ad.no_grad():
        probe = op(*inputs)
    reduce = _contract(probe, rng)
    return (lambda *xs: reduce(op(*xs))), inputs


@case("add")
def _(rng):
    return _wrap(rng, ad.add, [_u(rng, 3, 4), _u(rng, 3, 4)])


@case("sub")
def _(rng):
    return _wrap(rng, ad.sub, [_u(rng, 5), _u(rng, 5)])


@case("hadamard")
def _(rng):
    return _wrap(rng, ad.hadamard, [_u(rng, 3, 4), _u(rng, 3, 4)])


@case("scale")
def _(rng):
    c = float(rng.uniform(-2, 2))
    return _wrap(rng, lambda x: ad.scale(x, c), [_u(rng, 4, 2)])


@case("bias_add")
def _(rng):
    return _wrap(rng, ad.bias_add, [_u(rng, 4, 3), _u(rng, 3)])


@case("bias_add_scalar")
def _(rng):
    return _wrap(rng, ad.bias_add, [_u(rng, 4, 3), _u(rng, 1)])


@case("matmul")
def _(rng):
    return _wrap(rng, ad.matmul, [_u(rng, 3, 4), _u(rng, 4, 2)])


@case("matmul_vec")
def _(rng):
    return _wrap(rng, ad.matmul, [_u(rng, 3, 4), _u(rng, 4)])


@case("matmul_rowvec")
def _(rng):
    return _wrap(rng, ad.matmul, [_u(rng, 4), _u(rng, 4, 3)])


@case("concat")
def _(rng):
    return _wrap(rng, lambda a, b: ad.concat([a, b], axis=1), [_u(rng, 3, 2), _u(rng, 3, 4)])


@case("reshape")
def _(rng):
    return _wrap(rng, lambda x: ad.reshape(x, (6, 2)), [_u(rng, 3, 4)])


@case("index")
def _(rng):
    rows = np.array([2, 0, 2, 1])
    return _wrap(rng, lambda x: ad.index(x, rows), [_u(rng, 3, 4)])


@case("pad_rows")
def _(rng):
    return _wrap(rng, lambda x: ad.pad_rows(x, 2, 1), [_u(rng, 3, 2)])


@case("sigmoid")
def _(rng):
    return _wrap(rng, ad.sigmoid, [_u(rng, 4, 3)])


@case("tanh")
def _(rng):
    return _wrap(rng, ad.tanh, [_u(rng, 4, 3)])


@case("relu")
def _(rng):
    x = rng.uniform(-2, 2, size=(4, 3))
    x[np.abs(x) < 1e-3] = 0.5  # keep clear of the kink
    return _wrap(rng, ad.relu, [Tensor(x)])


@case("sum")
def _(rng):
    return (lambda x: ad.tensor_sum(ad.tanh(x))), [_u(rng, 3, 3)]


@case("mean")
def _(rng):
    return (lambda x: ad.tensor_mean(ad.tanh(x))), [_u(rng, 3, 3)]


@case("conv1d")
def _(rng):
    return _wrap(rng, ad.conv1d, [_u(rng, 9, 3), _u(rng, 4, 3, 2), _u(rng, 2)])


@case("conv1d_stride2")
def _(rng):
    return _wrap(rng, lambda x, k, b: ad.conv1d(x, k, b, 2), [_u(rng, 10, 2), _u(rng, 3, 2, 3), _u(rng, 3)])


@case("maxpool1d")
def _(rng):
    return _wrap(rng, lambda x: ad.maxpool1d(x, 2, 2), [_u(rng, 8, 3)])


@case("maxpool1d_overlap")
def _(rng):
    return _wrap(rng, lambda x: ad.maxpool1d(x, 3, 1), [_u(rng, 7, 2)])


@case("scale_rows")
def _(rng):
    return _wrap(rng, ad.scale_rows, [_u(rng, 4, 3), _u(rng, 4)])


@case("weighted_mean")
def _(rng):
    return _wrap(rng, lambda x, s: ad.weighted_mean(x, ad.sigmoid(s)), [_u(rng, 5, 3), _u(rng, 5)])


@case("dropout")
def _(rng):
    seed = int(rng.integers(1 << 31))
    op = lambda x: ad.dropout(x, 0.5, np.random.default_rng(seed), True)
    return _wrap(rng, op, [_u(rng, 4, 4)])


@case("batch_norm_train")
def _(rng):
    state = BatchNormState.create(3)
    op = lambda x, g, b: ad.batch_norm(x, g, b, state, True, update_stats=False)
    return _wrap(rng, op, [_u(rng, 5, 3), _u(rng, 3), _u(rng, 3)])


@case("batch_norm_infer")
def _(rng):
    state = BatchNormState(rng.uniform(-1, 1, 3), rng.uniform(0.5, 2, 3))
    op = lambda x, g, b: ad.batch_norm(x, g, b, state, False)
    return _wrap(rng, op, [_u(rng, 5, 3), _u(rng, 3), _u(rng, 3)])


@case("bce_loss")
def _(rng):
    y = rng.integers(0, 2, size=6)
    return (lambda z: ad.bce_loss(ad.sigmoid(z), y)), [_u(rng, 6)]


@case("local_attention")
def _(rng):
    op = lambda x, w, b: local_attention(x, w, b)[0]
    return _wrap(rng, op, [_u(rng, 6, 3), _u(rng, 3, 3), _u(rng, 1)])


@case("global_attention")
def _(rng):
    op = lambda x, w, b: global_attention(x, w, b)[0]
    return _wrap(rng, op, [_u(rng, 4, 3), _u(rng, 4, 4, 3), _u(rng, 1)])


@case("global_attention_padded")
def _(rng):
    op = lambda x, w, b: global_attention(x, w, b)[0]
    return _wrap(rng, op, [_u(rng, 3, 2), _u(rng, 5, 5, 2), _u(rng, 1)])


@case("attention_pool")
def _(rng):
    op = lambda x, w, b: attention_pool(x, w, b)[0]
    return _wrap(rng, op, [_u(rng, 4, 3), _u(rng, 4, 4, 3), _u(rng, 1)])


def _lstm_inputs(rng, d, h):
    return [_u(rng, *s) for s in _lstm_param_shapes(d, h)]


def _lstm_param_shapes(d, h):
    return [(h, d)] * 4 + [(h, h)] * 4 + [(h,)] * 4


@case("lstm_step")
def _(rng):
    d, h = 3, 4
    inputs = [_u(rng, d), _u(rng, h), _u(rng, h)] + _lstm_inputs(rng, d, h)

    def op(x, hp, cp, *ps):
        h_t, c_t = lstm_step(x, hp, cp, LstmParams(*ps))
        return ad.concat([h_t, c_t])

    return _wrap(rng, op, inputs)


@case("blstm_forward")
def _(rng):
    d, h = 2, 3
    inputs = [_u(rng, 4, d)] + _lstm_inputs(rng, d, h) + _lstm_inputs(rng, d, h)

    def op(x, *ps):
        return blstm_forward(x, LstmParams(*ps[:12]), LstmParams(*ps[12:]))

    return _wrap(rng, op, inputs)


def _model_case(kind, head="sigmoid"):
    def build(rng):
        cfg = ModelConfig.tiny(kind, dropout=0.0, head=head)
        model = HpsmpModel.create(cfg, seed=int(rng.integers(1 << 31)))
        for p in model.params.values():
            p.data[...] = rng.uniform(-1, 1, size=p.shape)
        seqs = [_u(rng, cfg.max_len, cfg.n_features) for _ in range(3)]
        y = np.array([1.0, 0.0, 1.0])
        names = sorted(model.params)
        f = lambda *ps: ad.bce_loss(model.forward(seqs, "train", update_stats=False), y)
        return f, [model.params[n] for n in names] + seqs
    return build


PATH_CASES["cnn_lg_path"] = _model_case("cnn_lg")
PATH_CASES["cnn_blstm_path"] = _model_case("cnn_blstm")
PATH_CASES["hybrid"] = _model_case("hybrid")


def run_case(name: str, seed: int = 0, tol: float = 1e-4,
             max_coords: Optional[int] = None) -> GradCheckReport:
    builder = CASES.get(name) or PATH_CASES[name]
    f, inputs = builder(np.random.default_rng(seed))
    return grad_check(f, inputs, tol=tol, max_coords=max_coords, seed=seed)


def run_all(seeds=(0,), tol: float = 1e-4, path_coords: int = 12):
    """Yield (name, seed, report) for every op case and model-path case."""
    for name in CASES:
        for s in seeds:
            yield name, s, run_case(name, s, tol)
    for name in PATH_CASES:
        yield name, seeds[0], run_case(name, seeds[0], tol, max_coords=path_coords)
