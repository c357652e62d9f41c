"""CNN local/global attention path, CNN-BLSTM path and the fusion head."""

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, ContractError, DimensionError, Tensor
from .text import EmbeddingTable, PriceNormalizer, Vocabulary, embed_sequence

KINDS = ("hybrid", "cnn_lg", "cnn_blstm")
HEADS = ("sigmoid", "relu")
ATTENTION_MODES = ("reweight", "mean")


@dataclass
class ModelConfig:
    """Architecture of one configuration.

    Defaults are the full-scale hybrid.  ``standalone`` and ``tiny`` build the
    other presets; every size is overridable for desk-scale runs.
    """

    kind: str = "hybrid"
    max_len: int = 64
    n_features: int = 50
    price_fusion: str = "token"
    # CNN local/global path
    lal_window: int = 5
    lg_filters: int = 80
    lg_kernel: int = 15
    pool_window: int = 2
    pool_stride: int = 2
    gal_filters: int = 0
    gal_kernels: Tuple[int, ...] = (2, 3)
    # CNN-BLSTM path: (filters, kernel) per conv stage, attention mode per stage
    bl_convs: Tuple[Tuple[int, int], ...] = ((50, 25), (100, 25))
    bl_attention: Tuple[str, ...] = ("reweight", "mean")
    hidden: int = 250
    blstm_readout: str = "final"
    # fusion / head
    fusion: Tuple[int, ...] = (100, 50)
    head: str = "sigmoid"
    dropout: float = 0.5
    batch_norm: bool = True
    init_scale: float = 0.05

    def __post_init__(self):
        self.gal_kernels = tuple(int(k) for k in self.gal_kernels)
        self.bl_convs = tuple((int(f), int(k)) for f, k in self.bl_convs)
        self.bl_attention = tuple(self.bl_attention)
        self.fusion = tuple(int(n) for n in self.fusion)
        if self.kind not in KINDS:
            raise ContractError(f"unknown model kind {self.kind!r}")
        if self.head not in HEADS:
            raise ContractError(f"unknown head {self.head!r}")
        if self.price_fusion not in ("token", "none"):
            raise ContractError(f"unknown price_fusion {self.price_fusion!r}")
        if self.lal_window < 1 or self.lal_window % 2 == 0:
            raise ContractError("local attention window must be odd and >= 1")
        if len(self.bl_attention) != len(self.bl_convs):
            raise ContractError("one attention mode per BLSTM-path conv stage")
        if any(m not in ATTENTION_MODES for m in self.bl_attention):
            raise ContractError(f"attention modes must be in {ATTENTION_MODES}")
        if self.blstm_readout not in ("final", "last_position"):
            raise ContractError(f"unknown blstm_readout {self.blstm_readout!r}")
        if self.max_len < 2:
            raise ContractError("max_len must be >= 2")
        if self.uses_lg:
            self.lg_lengths()
        if self.uses_bl:
            self.bl_lengths()

    @property
    def uses_lg(self) -> bool:
        return self.kind in ("hybrid", "cnn_lg")

    @property
    def uses_bl(self) -> bool:
        return self.kind in ("hybrid", "cnn_blstm")

    def lg_lengths(self) -> Tuple[int, int]:
        """Sequence lengths after the k-conv and after max-pooling."""
        conv_len = self.max_len - self.lg_kernel + 1
        if conv_len < self.pool_window:
            raise DimensionError(
                f"CNN-LG path: max_len {self.max_len} too short for kernel {self.lg_kernel} "
                f"and pool window {self.pool_window}"
            )
        pooled = (conv_len - self.pool_window) // self.pool_stride + 1
        if self.gal_filters and pooled < max(self.gal_kernels):
            raise DimensionError("CNN-LG path: pooled length shorter than a GAL kernel")
        return conv_len, pooled

    def bl_lengths(self) -> List[int]:
        lengths, cur = [], self.max_len
        for filters, k in self.bl_convs:
            cur = cur - k + 1
            if cur < 1:
                raise DimensionError(f"CNN-BLSTM path: kernel {k} longer than its input")
            lengths.append(cur)
            if lengths and self.bl_attention[len(lengths) - 1] == "mean":
                cur = 1
        return lengths

    def lg_width(self) -> int:
        if not self.uses_lg:
            return 0
        _, pooled = self.lg_lengths()
        if self.gal_filters:
            return self.gal_filters * len(self.gal_kernels)
        return pooled * self.lg_filters

    def bl_width(self) -> int:
        return 2 * self.hidden if self.uses_bl else 0

    def feature_width(self) -> int:
        return self.lg_width() + self.bl_width()

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, obj):
        return cls(**obj)

    @classmethod
    def standalone(cls, kind: str, **overrides) -> "ModelConfig":
        if kind == "cnn_lg":
            base = dict(kind="cnn_lg", lg_filters=80, gal_filters=50, gal_kernels=(2, 3), fusion=())
        elif kind == "cnn_blstm":
            base = dict(kind="cnn_blstm", bl_convs=((64, 25),), bl_attention=("reweight",),
                        hidden=250, fusion=(300,))
        elif kind == "hybrid":
            base = {}
        else:
            raise ContractError(f"unknown model kind {kind!r}")
        base.update(overrides)
        return cls(**base)

    @classmethod
    def tiny(cls, kind: str = "hybrid", **overrides) -> "ModelConfig":
        """A configuration small enough for gradient checks and quick tests."""
        base = dict(max_len=12, n_features=4, lal_window=3, lg_filters=3, lg_kernel=3,
                    bl_convs=((4, 3), (8, 3)), bl_attention=("reweight", "mean"),
                    hidden=5, fusion=(6, 4), init_scale=0.5)
        if kind == "cnn_lg":
            base.update(kind="cnn_lg", gal_filters=3, gal_kernels=(2, 3), fusion=())
        elif kind == "cnn_blstm":
            base.update(kind="cnn_blstm", bl_convs=((4, 3),), bl_attention=("reweight",),
                        fusion=(6,))
        base.update(overrides)
        return cls(**base)


@dataclass
class LstmParams:
    W_i: Tensor
    W_f: Tensor
    W_c: Tensor
    W_o: Tensor
    U_i: Tensor
    U_f: Tensor
    U_c: Tensor
    U_o: Tensor
    b_i: Tensor
    b_f: Tensor
    b_c: Tensor
    b_o: Tensor

    NAMES = ("W_i", "W_f", "W_c", "W_o", "U_i", "U_f", "U_c", "U_o", "b_i", "b_f", "b_c", "b_o")

    @property
    def hidden(self) -> int:
        return self.b_i.shape[0]

    @classmethod
    def from_params(cls, params: Dict[str, Tensor], prefix: str) -> "LstmParams":
        return cls(**{n: params[f"{prefix}.{n}"] for n in cls.NAMES})

    @classmethod
    def zeros(cls, input_width: int, hidden: int) -> "LstmParams":
        shapes = _lstm_shapes(input_width, hidden)
        return cls(**{n: Tensor(np.zeros(s)) for n, s in shapes.items()})


def _lstm_shapes(input_width, hidden):
    shapes = {}
    for gate in "ifco":
        shapes[f"W_{gate}"] = (hidden, input_width)
        shapes[f"U_{gate}"] = (hidden, hidden)
        shapes[f"b_{gate}"] = (hidden,)
    return shapes


# ---------------------------------------------------------------------------
# attention layers


def local_attention(seq: Tensor, weight: Tensor, bias: Tensor):
    """Windowed sigmoid attention; returns (weighted sequence, scores).

    The score of position i is sigmoid(<window(i), weight>_F + bias), where
    window(i) is the ``weight.shape[0]`` rows centred on i, zero-padded at the
    sequence edges.
    """
    width = weight.shape[0]
    if width % 2 == 0:
        raise ContractError("local attention window must be odd")
    if seq.shape[1] != weight.shape[1]:
        raise DimensionError(f"local_attention: feature axis (1) {seq.shape[1]} vs {weight.shape[1]}")
    half = (width - 1) // 2
    padded = ad.pad_rows(seq, half, half) if half else seq
    kernel = ad.reshape(weight, weight.shape + (1,))
    logits = ad.conv1d(padded, kernel, bias)
    scores = ad.sigmoid(ad.reshape(logits, (seq.shape[0],)))
    return ad.scale_rows(seq, scores), scores


def global_attention_scores(seq: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Score of position i: sigmoid(<padded seq, weight[i]>_F + bias)."""
    n_pos, max_len, width = weight.shape
    length = seq.shape[0]
    if seq.ndim != 2 or seq.shape[1] != width:
        raise DimensionError(f"global_attention: feature axis (1) of {seq.shape} vs {width}")
    if length > max_len:
        raise DimensionError(f"global_attention: length axis (0) {length} exceeds max_len {max_len}")
    padded = ad.pad_rows(seq, 0, max_len - length) if length < max_len else seq
    flat_w = ad.reshape(weight, (n_pos, max_len * width))
    logits = ad.bias_add(ad.matmul(flat_w, ad.reshape(padded, (max_len * width,))), bias)
    scores = ad.sigmoid(logits)
    if length < n_pos:
        scores = ad.index(scores, slice(0, length))
    return scores


def global_attention(seq: Tensor, weight: Tensor, bias: Tensor):
    """Whole-sequence sigmoid attention; returns (weighted sequence, scores)."""
    scores = global_attention_scores(seq, weight, bias)
    return ad.scale_rows(seq, scores), scores


def attention_pool(seq: Tensor, weight: Tensor, bias: Tensor):
    """Global attention scores used as weights of a mean over positions."""
    scores = global_attention_scores(seq, weight, bias)
    return ad.weighted_mean(seq, scores), scores


# ---------------------------------------------------------------------------
# recurrent layers


def lstm_step(x_t: Tensor, h_prev: Tensor, c_prev: Tensor, p: LstmParams):
    """One LSTM update; returns (h_t, c_t)."""

    def gate(W, U, b):
        return ad.bias_add(ad.add(ad.matmul(W, x_t), ad.matmul(U, h_prev)), b)

    i = ad.sigmoid(gate(p.W_i, p.U_i, p.b_i))
    f = ad.sigmoid(gate(p.W_f, p.U_f, p.b_f))
    g = ad.tanh(gate(p.W_c, p.U_c, p.b_c))
    c_t = ad.add(ad.hadamard(f, c_prev), ad.hadamard(i, g))
    o = ad.sigmoid(gate(p.W_o, p.U_o, p.b_o))
    h_t = ad.hadamard(o, ad.tanh(c_t))
    return h_t, c_t


def run_lstm(seq: Tensor, p: LstmParams, reverse: bool = False) -> List[Tensor]:
    """Hidden states in sequence order, computed left-to-right or right-to-left."""
    h = Tensor(np.zeros(p.hidden))
    c = Tensor(np.zeros(p.hidden))
    order = range(seq.shape[0] - 1, -1, -1) if reverse else range(seq.shape[0])
    states = [None] * seq.shape[0]
    for t in order:
        h, c = lstm_step(ad.index(seq, t), h, c, p)
        states[t] = h
    return states


def blstm_forward(seq: Tensor, params_fwd: LstmParams, params_bwd: LstmParams) -> Tensor:
    """(L, D) -> (L, 2H): forward and backward hidden states side by side."""
    if seq.shape[0] < 1:
        raise DimensionError("blstm_forward: empty sequence")
    fwd = run_lstm(seq, params_fwd)
    bwd = run_lstm(seq, params_bwd, reverse=True)
    return ad.stack_rows([ad.concat([f, b]) for f, b in zip(fwd, bwd)])


# ---------------------------------------------------------------------------
# paths


def init_params(cfg: ModelConfig, seed: int, vocab_size: Optional[int] = None) -> Dict[str, Tensor]:
    """Weights uniform in [-init_scale, init_scale]; biases zero; BN scale one."""
    rng = np.random.default_rng(seed)
    s = cfg.init_scale
    params: Dict[str, Tensor] = {}

    def weight(name, shape):
        params[name] = Tensor(rng.uniform(-s, s, size=shape), requires_grad=True, name=name)

    def zeros(name, shape, value=0.0):
        params[name] = Tensor(np.full(shape, value), requires_grad=True, name=name)

    nf = cfg.n_features
    if vocab_size is not None:
        weight("embedding", (vocab_size, nf))
    if cfg.price_fusion == "token":
        weight("price_proj", (4, nf))
    if cfg.uses_lg:
        _, pooled = cfg.lg_lengths()
        weight("lg.lal.w", (cfg.lal_window, nf))
        zeros("lg.lal.b", (1,))
        weight("lg.conv.k", (cfg.lg_kernel, nf, cfg.lg_filters))
        zeros("lg.conv.b", (cfg.lg_filters,))
        weight("lg.gal.w", (pooled, pooled, cfg.lg_filters))
        zeros("lg.gal.b", (1,))
        if cfg.gal_filters:
            for k in cfg.gal_kernels:
                weight(f"lg.gconv{k}.k", (k, cfg.lg_filters, cfg.gal_filters))
                zeros(f"lg.gconv{k}.b", (cfg.gal_filters,))
    if cfg.uses_bl:
        width, cur = nf, cfg.max_len
        for j, ((filters, k), mode) in enumerate(zip(cfg.bl_convs, cfg.bl_attention)):
            weight(f"bl.conv{j}.k", (k, width, filters))
            zeros(f"bl.conv{j}.b", (filters,))
            cur = cur - k + 1
            weight(f"bl.att{j}.w", (cur, cur, filters))
            zeros(f"bl.att{j}.b", (1,))
            width = filters
            if mode == "mean":
                cur = 1
        for direction in ("fwd", "bwd"):
            for name, shape in _lstm_shapes(1, cfg.hidden).items():
                if name.startswith("b_"):
                    zeros(f"bl.{direction}.{name}", shape)
                else:
                    weight(f"bl.{direction}.{name}", shape)
    width = cfg.feature_width()
    if cfg.batch_norm:
        zeros("bn.gamma", (width,), 1.0)
        zeros("bn.beta", (width,))
    for j, units in enumerate(cfg.fusion + (1,)):
        weight(f"fc{j}.w", (width, units))
        zeros(f"fc{j}.b", (units,))
        width = units
    return params


def cnn_lg_forward(day_seq: Tensor, params: Dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """LAL -> conv -> max-pool -> GAL -> flatten (or GAL convs for the standalone model)."""
    x, _ = local_attention(day_seq, params["lg.lal.w"], params["lg.lal.b"])
    x = ad.conv1d(x, params["lg.conv.k"], params["lg.conv.b"])
    x = ad.maxpool1d(x, cfg.pool_window, cfg.pool_stride)
    x, _ = global_attention(x, params["lg.gal.w"], params["lg.gal.b"])
    if not cfg.gal_filters:
        return ad.reshape(x, (x.size,))
    branches = []
    for k in cfg.gal_kernels:
        y = ad.conv1d(x, params[f"lg.gconv{k}.k"], params[f"lg.gconv{k}.b"])
        y = ad.maxpool1d(y, y.shape[0], 1)
        branches.append(ad.reshape(y, (y.size,)))
    return ad.concat(branches)


def cnn_blstm_forward(day_seq: Tensor, params: Dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """Conv/attention stages -> global max-pool -> BLSTM over pooled channels -> (2H,)."""
    x = day_seq
    for j, mode in enumerate(cfg.bl_attention):
        x = ad.conv1d(x, params[f"bl.conv{j}.k"], params[f"bl.conv{j}.b"])
        w, b = params[f"bl.att{j}.w"], params[f"bl.att{j}.b"]
        if mode == "reweight":
            x, _ = global_attention(x, w, b)
        else:
            x, _ = attention_pool(x, w, b)
            x = ad.reshape(x, (1, x.size))
    x = ad.maxpool1d(x, x.shape[0], 1)
    seq = ad.reshape(x, (x.size, 1))
    pf = LstmParams.from_params(params, "bl.fwd")
    pb = LstmParams.from_params(params, "bl.bwd")
    fwd = run_lstm(seq, pf)
    bwd = run_lstm(seq, pb, reverse=True)
    last = seq.shape[0] - 1
    if cfg.blstm_readout == "final":
        return ad.concat([fwd[last], bwd[0]])
    return ad.concat([fwd[last], bwd[last]])


def path_features(day_seq: Tensor, params: Dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    want = (cfg.max_len, cfg.n_features)
    if day_seq.shape != want:
        raise DimensionError(f"day sequence shape {day_seq.shape} does not match config {want}")
    parts = []
    if cfg.uses_lg:
        parts.append(cnn_lg_forward(day_seq, params, cfg))
    if cfg.uses_bl:
        parts.append(cnn_blstm_forward(day_seq, params, cfg))
    return ad.concat(parts) if len(parts) > 1 else parts[0]


def fusion_forward(features: Tensor, params: Dict[str, Tensor], cfg: ModelConfig,
                   bn_state: Optional[BatchNormState], train: bool,
                   rng: Optional[np.random.Generator] = None, update_stats: bool = True) -> Tensor:
    """(B, F) fused features -> (B,) movement scores."""
    x = features
    if cfg.batch_norm:
        x = ad.batch_norm(x, params["bn.gamma"], params["bn.beta"], bn_state, train, update_stats)
    if not cfg.fusion:
        x = ad.dropout(x, cfg.dropout, rng, train)
    for j in range(len(cfg.fusion)):
        x = ad.tanh(ad.bias_add(ad.matmul(x, params[f"fc{j}.w"]), params[f"fc{j}.b"]))
        x = ad.dropout(x, cfg.dropout, rng, train)
    j = len(cfg.fusion)
    z = ad.bias_add(ad.matmul(x, params[f"fc{j}.w"]), params[f"fc{j}.b"])
    z = ad.reshape(z, (z.shape[0],))
    if cfg.head == "sigmoid":
        return ad.sigmoid(z)
    # relu head, clipped to [0, 1] as min(relu(z), 1) = 1 - relu(1 - relu(z))
    r = ad.relu(z)
    one = Tensor(np.ones(z.shape))
    return ad.sub(one, ad.relu(ad.sub(one, r)))


# ---------------------------------------------------------------------------
# model wrapper


@dataclass
class Example:
    """Model input for one day: token ids, normalized prices and an optional label."""

    token_ids: Sequence[int]
    prices: np.ndarray
    label: Optional[int] = None
    date: Optional[str] = None


@dataclass
class HpsmpModel:
    config: ModelConfig
    params: Dict[str, Tensor]
    bn_state: Optional[BatchNormState] = None
    seed: int = 0
    normalizer: Optional[PriceNormalizer] = None
    vocab: Optional[Vocabulary] = None
    frozen_rows: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def create(cls, config: ModelConfig, seed: int = 0, vocab: Optional[Vocabulary] = None,
               embeddings: Optional[EmbeddingTable] = None,
               normalizer: Optional[PriceNormalizer] = None) -> "HpsmpModel":
        vocab_size = None
        if embeddings is not None:
            vocab_size = embeddings.matrix.shape[0]
            if embeddings.n_features != config.n_features:
                config = replace(config, n_features=embeddings.n_features)
        elif vocab is not None:
            vocab_size = len(vocab)
        params = init_params(config, seed, vocab_size)
        frozen = None
        if embeddings is not None:
            params["embedding"].data[...] = embeddings.matrix
            frozen = ~embeddings.trainable_rows
        bn = BatchNormState.create(config.feature_width()) if config.batch_norm else None
        return cls(config, params, bn, seed, normalizer, vocab, frozen)

    def embed(self, example: Example) -> Tensor:
        proj = self.params.get("price_proj") if self.config.price_fusion == "token" else None
        return embed_sequence(example.token_ids, example.prices, self.params["embedding"],
                              proj, self.config.max_len)

    def features(self, day_seq: Tensor) -> Tensor:
        return path_features(day_seq, self.params, self.config)

    def forward(self, day_seqs: Sequence[Tensor], mode: str = "infer",
                rng: Optional[np.random.Generator] = None, update_stats: bool = True) -> Tensor:
        """Scores for a batch of day sequences, shape (B,)."""
        if mode not in ("train", "infer"):
            raise ContractError(f"mode must be 'train' or 'infer', got {mode!r}")
        feats = ad.stack_rows([self.features(s) for s in day_seqs])
        return fusion_forward(feats, self.params, self.config, self.bn_state, mode == "train",
                              rng, update_stats)

    def predict_sequence(self, day_seq: Tensor) -> float:
        with ad.no_grad():
            return float(self.forward([day_seq], "infer").data[0])

    def predict(self, example: Example) -> float:
        with ad.no_grad():
            return float(self.forward([self.embed(example)], "infer").data[0])

    # -- checkpoint -------------------------------------------------------

    def save(self, path) -> None:
        """Write config, tensors, normalization constants and seed to one .npz archive."""
        arrays = {f"param/{k}": v.data for k, v in self.params.items()}
        if self.bn_state is not None:
            arrays["bn/running_mean"] = self.bn_state.running_mean
            arrays["bn/running_var"] = self.bn_state.running_var
        if self.frozen_rows is not None:
            arrays["mask/frozen_rows"] = self.frozen_rows
        meta = {
            "format": "hpsmp-checkpoint/1",
            "config": self.config.to_dict(),
            "seed": self.seed,
            "normalizer": self.normalizer.to_dict() if self.normalizer else None,
            "vocab": {"tokens": self.vocab.tokens, "min_count": self.vocab.min_count}
            if self.vocab else None,
            "bn": {"momentum": self.bn_state.momentum, "eps": self.bn_state.eps}
            if self.bn_state else None,
            "params": {k: list(v.shape) for k, v in self.params.items()},
            "meta": self.meta,
        }
        arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "HpsmpModel":
        with np.load(Path(path), allow_pickle=False) as z:
            meta = json.loads(bytes(z["meta"]).decode("utf-8"))
            if meta.get("format") != "hpsmp-checkpoint/1":
                raise ContractError(f"{path}: not an hpsmp checkpoint")
            cfg_dict = meta["config"]
            cfg_dict["bl_convs"] = [tuple(x) for x in cfg_dict["bl_convs"]]
            config = ModelConfig.from_dict(cfg_dict)
            params = {
                name: Tensor(z[f"param/{name}"], requires_grad=True, name=name)
                for name in meta["params"]
            }
            bn = None
            if meta["bn"] is not None:
                bn = BatchNormState(z["bn/running_mean"].copy(), z["bn/running_var"].copy(),
                                    meta["bn"]["momentum"], meta["bn"]["eps"])
            frozen = z["mask/frozen_rows"].copy() if "mask/frozen_rows" in z.files else None
        normalizer = PriceNormalizer.from_dict(meta["normalizer"]) if meta["normalizer"] else None
        vocab = Vocabulary(meta["vocab"]["tokens"], meta["vocab"]["min_count"]) if meta["vocab"] else None
        return cls(config, params, bn, meta["seed"], normalizer, vocab, frozen, meta.get("meta", {}))


def hpsmp_forward(day_seq: Tensor, model: HpsmpModel, mode: str = "infer",
                  rng: Optional[np.random.Generator] = None) -> Tensor:
    """Single-day prediction in [0, 1] as a (1,) tensor."""
    return model.forward([day_seq], mode, rng)
