"""
LSTM and SR-LSTM cells, stacked-model container and forward pass.

Gate pre-activations act on the concatenation [h_{t-1}, x_t] (hidden first),
so every gate matrix has shape H x (H + D). Step functions accept a single
input vector of length D or a batch of shape (N, D); the forward pass
accepts one window (L, D) or a batch of windows (N, L, D).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .numkernel import NumericError, ShapeError, activate, child_rng, mat_vec, uniform

FORMAT_VERSION = 1
LSTM_PARAM_NAMES = ("w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o")
SR_PARAM_NAMES = ("w_r", "b_r")
VARIANTS = ("lstm", "sr")
READOUT_INITS = ("uniform", "zero")


@dataclass(frozen=True, eq=False)
class LstmParams:
    w_f: np.ndarray
    w_i: np.ndarray
    w_c: np.ndarray
    w_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    @property
    def hidden_size(self) -> int:
        return int(self.w_f.shape[-2])

    @property
    def input_size(self) -> int:
        return int(self.w_f.shape[-1]) - self.hidden_size

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in LSTM_PARAM_NAMES}

    def validate(self) -> None:
        h = self.hidden_size
        for name in ("w_f", "w_i", "w_c", "w_o"):
            w = getattr(self, name)
            if w.shape != self.w_f.shape or w.shape[1] <= h:
                raise ShapeError(f"{name} has shape {w.shape}, expected {self.w_f.shape} with H={h}")
        for name in ("b_f", "b_i", "b_c", "b_o"):
            if getattr(self, name).shape != (h,):
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected ({h},)")
        if not all(np.all(np.isfinite(a)) for a in self.arrays().values()):
            raise NumericError("LSTM parameters contain non-finite entries")


@dataclass(frozen=True, eq=False)
class SrParams:
    base: LstmParams
    w_r: np.ndarray
    b_r: np.ndarray
    rho: str = "relu"

    @property
    def hidden_size(self) -> int:
        return self.base.hidden_size

    @property
    def input_size(self) -> int:
        return self.base.input_size

    def arrays(self) -> Dict[str, np.ndarray]:
        out = self.base.arrays()
        out["w_r"] = self.w_r
        out["b_r"] = self.b_r
        return out

    def validate(self) -> None:
        self.base.validate()
        h = self.hidden_size
        if self.w_r.shape != (h, h):
            raise ShapeError(f"w_r has shape {self.w_r.shape}, expected ({h}, {h})")
        if self.b_r.shape != (h,):
            raise ShapeError(f"b_r has shape {self.b_r.shape}, expected ({h},)")
        if not (np.all(np.isfinite(self.w_r)) and np.all(np.isfinite(self.b_r))):
            raise NumericError("regulation parameters contain non-finite entries")


LayerParams = Union[LstmParams, SrParams]


def _readout_bias(value) -> Union[float, np.ndarray]:
    # one bias per model in a stacked batch of perturbed models
    arr = np.asarray(value, dtype=np.float64)
    return float(arr) if arr.ndim == 0 else arr


@dataclass(frozen=True, eq=False)
class CellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int, batch: Tuple[int, ...] = ()) -> "CellState":
        return cls(h=np.zeros(batch + (hidden,)), c=np.zeros(batch + (hidden,)))


@dataclass(frozen=True, eq=False)
class StepTrace:
    """Intermediates of one step, kept for backpropagation."""
    x: np.ndarray
    hx: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    c_tilde: np.ndarray
    r: np.ndarray
    f_mod: np.ndarray
    i_mod: np.ndarray
    c_new: np.ndarray
    tanh_c: np.ndarray
    h_new: np.ndarray
    r_pre: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class ModelSpec:
    layers: Tuple[LayerParams, ...]
    dropout_rate: float
    w_out: np.ndarray
    b_out: float
    frozen: FrozenSet[str] = field(default_factory=frozenset)

    @property
    def variant(self) -> str:
        return "sr" if any(isinstance(layer, SrParams) for layer in self.layers) else "lstm"

    @property
    def feature_count(self) -> int:
        return self.layers[0].input_size

    @property
    def hidden_sizes(self) -> List[int]:
        return [layer.hidden_size for layer in self.layers]

    def validate(self) -> None:
        if not self.layers:
            raise ShapeError("model has no layers")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise NumericError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        prev = None
        for k, layer in enumerate(self.layers):
            layer.validate()
            if prev is not None and layer.input_size != prev:
                raise ShapeError(f"layer{k} expects input size {layer.input_size}, previous layer emits {prev}")
            prev = layer.hidden_size
        if self.w_out.shape != (prev,):
            raise ShapeError(f"w_out has shape {self.w_out.shape}, expected ({prev},)")

    def named_parameters(self, trainable_only: bool = False) -> Dict[str, np.ndarray]:
        """Flat ordered mapping 'layer<k>.<name>' -> array, then readout."""
        params: Dict[str, np.ndarray] = {}
        for k, layer in enumerate(self.layers):
            for name, arr in layer.arrays().items():
                params[f"layer{k}.{name}"] = arr
        params["w_out"] = self.w_out
        params["b_out"] = np.asarray(self.b_out, dtype=np.float64)
        if trainable_only:
            params = {name: arr for name, arr in params.items() if name not in self.frozen}
        return params

    def with_parameters(self, params: Mapping[str, np.ndarray]) -> "ModelSpec":
        """Copy of this spec with some or all parameters replaced."""
        merged = {**self.named_parameters(), **params}
        layers: List[LayerParams] = []
        for k, layer in enumerate(self.layers):
            prefix = f"layer{k}."
            base = LstmParams(**{name: np.asarray(merged[prefix + name], dtype=np.float64)
                                 for name in LSTM_PARAM_NAMES})
            if isinstance(layer, SrParams):
                layers.append(SrParams(base=base,
                                       w_r=np.asarray(merged[prefix + "w_r"], dtype=np.float64),
                                       b_r=np.asarray(merged[prefix + "b_r"], dtype=np.float64),
                                       rho=layer.rho))
            else:
                layers.append(base)
        return replace(self, layers=tuple(layers),
                       w_out=np.asarray(merged["w_out"], dtype=np.float64),
                       b_out=_readout_bias(merged["b_out"]))


# ----------------------------------------------------------------------
# initialisation
# ----------------------------------------------------------------------
def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    s = np.sqrt(6.0 / (cols + rows))
    return uniform(rng, -s, s, size=(rows, cols))


def init_params(rng: np.random.Generator, d: int, h: int, variant: str = "lstm",
                rho: str = "relu") -> LayerParams:
    """Glorot-uniform gate weights, forget bias 1, other biases 0.

    The SR variant draws w_r after the base block and starts with b_r = 1.
    """
    if d < 1 or h < 1:
        raise ShapeError(f"input and hidden sizes must be >= 1, got d={d}, h={h}")
    if variant not in VARIANTS:
        raise NumericError(f"Unknown cell variant: {variant}")

    base = LstmParams(
        w_f=_glorot(rng, h, h + d),
        w_i=_glorot(rng, h, h + d),
        w_c=_glorot(rng, h, h + d),
        w_o=_glorot(rng, h, h + d),
        b_f=np.ones(h),
        b_i=np.zeros(h),
        b_c=np.zeros(h),
        b_o=np.zeros(h),
    )
    if variant == "lstm":
        return base
    return SrParams(base=base, w_r=_glorot(rng, h, h), b_r=np.ones(h), rho=rho)


def build_model(seed: int, feature_count: int, variant: str = "lstm", layers: int = 2,
                hidden: int = 32, dropout: float = 0.2, rho: str = "relu",
                freeze_regulation: bool = False, readout_init: str = "uniform",
                readout_bias: float = 0.0) -> ModelSpec:
    """Stacked model with per-layer seed streams, so a layer's draws do not
    depend on the variant of the layers before it.

    readout_init='zero' starts w_out at zero, so the untrained model
    predicts readout_bias for every window.
    """
    if readout_init not in READOUT_INITS:
        raise NumericError(f"Unknown readout initialisation: {readout_init}")
    blocks: List[LayerParams] = []
    frozen = set()
    in_size = feature_count
    for k in range(layers):
        block = init_params(child_rng(seed, f"layer{k}"), in_size, hidden, variant, rho)
        if freeze_regulation and isinstance(block, SrParams):
            block = SrParams(base=block.base, w_r=np.zeros((hidden, hidden)), b_r=np.ones(hidden), rho="relu")
            frozen.update({f"layer{k}.w_r", f"layer{k}.b_r"})
        blocks.append(block)
        in_size = hidden

    if readout_init == "zero":
        w_out = np.zeros(hidden)
    else:
        s = np.sqrt(6.0 / (hidden + 1))
        w_out = uniform(child_rng(seed, "readout"), -s, s, size=hidden)
    spec = ModelSpec(layers=tuple(blocks), dropout_rate=float(dropout), w_out=w_out,
                     b_out=float(readout_bias), frozen=frozenset(frozen))
    spec.validate()
    return spec


# ----------------------------------------------------------------------
# forward computation
# ----------------------------------------------------------------------
def _affine(w: np.ndarray, v: np.ndarray, b: np.ndarray) -> np.ndarray:
    if w.ndim == 3:
        # per-sample weights (N, H, K) against inputs (N, K)
        return np.einsum("nhk,nk->nh", w, v) + b
    if v.ndim == 1:
        return mat_vec(w, v) + b
    return v @ w.T + b


def _gates(p: LstmParams, s: CellState, x: np.ndarray):
    if x.shape[-1] != p.input_size:
        raise ShapeError(f"input of shape {x.shape} does not match input size {p.input_size}")
    if s.h.shape[-1] != p.hidden_size or s.c.shape != s.h.shape:
        raise ShapeError(f"state shapes {s.h.shape}/{s.c.shape} do not match hidden size {p.hidden_size}")

    hx = np.concatenate([s.h, x], axis=-1)
    f = activate("sigmoid", _affine(p.w_f, hx, p.b_f))
    i = activate("sigmoid", _affine(p.w_i, hx, p.b_i))
    c_tilde = activate("tanh", _affine(p.w_c, hx, p.b_c))
    o = activate("sigmoid", _affine(p.w_o, hx, p.b_o))
    return hx, f, i, c_tilde, o


def lstm_step(p: LstmParams, s: CellState, x: np.ndarray) -> Tuple[CellState, StepTrace]:
    x = np.asarray(x, dtype=np.float64)
    hx, f, i, c_tilde, o = _gates(p, s, x)
    c_new = f * s.c + i * c_tilde
    tanh_c = activate("tanh", c_new)
    h_new = o * tanh_c

    trace = StepTrace(x=x, hx=hx, h_prev=s.h, c_prev=s.c, f=f, i=i, o=o, c_tilde=c_tilde,
                      r=np.ones_like(f), f_mod=f, i_mod=i, c_new=c_new, tanh_c=tanh_c, h_new=h_new)
    return CellState(h=h_new, c=c_new), trace


def sr_lstm_step(p: SrParams, s: CellState, x: np.ndarray) -> Tuple[CellState, StepTrace]:
    x = np.asarray(x, dtype=np.float64)
    hx, f, i, c_tilde, o = _gates(p.base, s, x)

    # R_t regulates forget and input gates only; output gate is untouched
    r_pre = _affine(p.w_r, s.h, p.b_r)
    r = activate(p.rho, r_pre)
    f_mod = f * r
    i_mod = i * r

    c_new = f_mod * s.c + i_mod * c_tilde
    tanh_c = activate("tanh", c_new)
    h_new = o * tanh_c

    trace = StepTrace(x=x, hx=hx, h_prev=s.h, c_prev=s.c, f=f, i=i, o=o, c_tilde=c_tilde,
                      r=r, f_mod=f_mod, i_mod=i_mod, c_new=c_new, tanh_c=tanh_c, h_new=h_new,
                      r_pre=r_pre)
    return CellState(h=h_new, c=c_new), trace


def cell_step(p: LayerParams, s: CellState, x: np.ndarray) -> Tuple[CellState, StepTrace]:
    if isinstance(p, SrParams):
        return sr_lstm_step(p, s, x)
    return lstm_step(p, s, x)


def make_dropout_masks(rng: np.random.Generator, spec: ModelSpec,
                       batch: Tuple[int, ...], steps: int) -> Tuple[np.ndarray, ...]:
    """Inverted-dropout masks for the outputs of every layer but the last."""
    keep = 1.0 - spec.dropout_rate
    masks = []
    for layer in spec.layers[:-1]:
        draw = rng.random(batch + (steps, layer.hidden_size))
        masks.append((draw >= spec.dropout_rate).astype(np.float64) / keep)
    return tuple(masks)


def forward_sequence(spec: ModelSpec, window,
                     dropout_mask: Optional[Sequence[np.ndarray]] = None):
    """Run the stack over a window and read out one scalar per window.

    Returns (prediction, traces) with traces[layer][step]. Zero initial
    states per layer; masks are applied to the hidden sequence handed from
    one layer to the next.
    """
    seq = np.asarray(window, dtype=np.float64)
    if seq.ndim not in (2, 3):
        raise ShapeError(f"window must have shape (L, D) or (N, L, D), got {seq.shape}")
    if seq.shape[-2] == 0:
        raise NumericError("empty window")
    if seq.shape[-1] != spec.feature_count:
        raise ShapeError(f"window feature size {seq.shape[-1]} does not match model input size {spec.feature_count}")
    if dropout_mask is not None and len(dropout_mask) != len(spec.layers) - 1:
        raise ShapeError(f"expected {len(spec.layers) - 1} dropout masks, got {len(dropout_mask)}")

    batch = seq.shape[:-2]
    steps = seq.shape[-2]
    inputs = [seq[..., t, :] for t in range(steps)]
    traces: List[List[StepTrace]] = []

    for k, layer in enumerate(spec.layers):
        state = CellState.zeros(layer.hidden_size, batch)
        layer_traces = []
        outputs = []
        for x in inputs:
            state, trace = cell_step(layer, state, x)
            layer_traces.append(trace)
            outputs.append(state.h)
        traces.append(layer_traces)

        if dropout_mask is not None and k < len(spec.layers) - 1:
            mask = np.asarray(dropout_mask[k], dtype=np.float64)
            expected = batch + (steps, layer.hidden_size)
            if mask.shape != expected:
                raise ShapeError(f"dropout mask for layer{k} has shape {mask.shape}, expected {expected}")
            outputs = [h * mask[..., t, :] for t, h in enumerate(outputs)]
        inputs = outputs

    h_final = traces[-1][-1].h_new
    if spec.w_out.ndim == 2:
        prediction = np.sum(h_final * spec.w_out, axis=-1) + spec.b_out
    else:
        prediction = h_final @ spec.w_out + spec.b_out
    if not batch:
        prediction = float(prediction)
    return prediction, traces


# ----------------------------------------------------------------------
# checkpoint document
# ----------------------------------------------------------------------
def spec_to_document(spec: ModelSpec) -> Dict:
    """Flat JSON-ready document of named arrays with shape metadata."""
    rho = next((layer.rho for layer in spec.layers if isinstance(layer, SrParams)), None)
    return {
        "format_version": FORMAT_VERSION,
        "variant": spec.variant,
        "rho": rho,
        "input_size": spec.feature_count,
        "hidden_sizes": spec.hidden_sizes,
        "dropout_rate": spec.dropout_rate,
        "frozen": sorted(spec.frozen),
        "parameters": {
            name: {"shape": list(arr.shape), "values": arr.ravel().tolist()}
            for name, arr in spec.named_parameters().items()
        },
    }


def spec_from_document(doc: Mapping) -> ModelSpec:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise NumericError(f"Unsupported checkpoint format_version: {version}")

    arrays = {}
    for name, entry in doc["parameters"].items():
        arr = np.asarray(entry["values"], dtype=np.float64)
        arrays[name] = arr.reshape(tuple(entry["shape"]))

    layers: List[LayerParams] = []
    for k in range(len(doc["hidden_sizes"])):
        prefix = f"layer{k}."
        base = LstmParams(**{name: arrays[prefix + name] for name in LSTM_PARAM_NAMES})
        if doc["variant"] == "sr":
            layers.append(SrParams(base=base, w_r=arrays[prefix + "w_r"], b_r=arrays[prefix + "b_r"],
                                   rho=doc.get("rho") or "relu"))
        else:
            layers.append(base)

    spec = ModelSpec(layers=tuple(layers), dropout_rate=float(doc["dropout_rate"]),
                     w_out=arrays["w_out"], b_out=float(arrays["b_out"]),
                     frozen=frozenset(doc.get("frozen", [])))
    spec.validate()
    return spec
