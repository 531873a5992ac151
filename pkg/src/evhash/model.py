"""The recurrent binary autoencoder.

Encoder: four batch-normalized LSTM layers; the sequence is strided by 2
after layers 2 and 3 (keep the 1-based even timesteps plus a trailing odd
leftover), so M input frames become M_e = ceil(ceil(M/2)/2) steps. The
last layer's hidden states pass through a clamped arctanh and a
straight-through sign, giving one L-bit code per encoder step.

Decoder: the mirror stack. Codes run through a layer, are average-
upsampled by 2 (inserted steps are the mean of their flanking steps,
boundaries replicate), run through the next layer, upsampled again, then
through two more layers; a final clamped arctanh emits feature vectors,
cut to the requested length.

Training-mode forwards run on the autodiff tape and couple batch items
through the per-timestep batch statistics; batch items may have distinct
lengths, in which case the statistics at step t use the items that reach
t. Inference-mode forwards are plain numpy with running statistics.

Checkpoint format MCBN (little-endian): magic "MCBN", version u8=1,
layer count u8, then per layer: d_x u32, d_h u32, the float32 tensors
W_h, W_x, b, gamma_h, gamma_x, gamma_c, beta_c, h0, c0, and the three
statistic sites (recurrent, input, cell), each as max_train_timestep u32
followed per timestep by a mean vector then a variance vector (float32).
After the layers: D u32, L u32, momentum f32, eps f32, max train input
length u32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .autodiff import Tensor, val
from .errors import (
    BadMagic,
    EmptyCodes,
    EmptySequence,
    ShapeMismatch,
    TruncatedFile,
    UnsupportedVersion,
)
from .ingest import FeatureSequence
from .numerics import (BNSiteStats, Parameter, bn2_add, bn_transform,
                       sgn_ste, sgn_surrogate)

ARCTANH_MARGIN = 1e-6


class BNLSTMCell:
    """One recurrent layer: weights, affine BN parameters, initial state.

    The recurrent and input pre-activation terms are normalized
    separately (their shifts are fixed at zero; the bias b covers both);
    the cell state is normalized inside the output tanh only, so the
    cell update itself stays unnormalized. Each of the three sites keeps
    its own per-timestep running statistics.
    """

    FIELD_ORDER = ("W_h", "W_x", "b", "gamma_h", "gamma_x",
                   "gamma_c", "beta_c", "h0", "c0")

    def __init__(self, d_x: int, d_h: int, rng: np.random.Generator,
                 momentum=0.1, eps=1e-5, dtype=np.float64, tag=""):
        self.d_x = d_x
        self.d_h = d_h
        kx = 1.0 / np.sqrt(d_x)
        kh = 1.0 / np.sqrt(d_h)

        def par(value, name):
            return Parameter(np.asarray(value, dtype=dtype), f"{tag}.{name}")

        self.W_h = par(rng.uniform(-kh, kh, size=(d_h, 4 * d_h)), "W_h")
        self.W_x = par(rng.uniform(-kx, kx, size=(d_x, 4 * d_h)), "W_x")
        self.b = par(np.zeros(4 * d_h), "b")
        self.gamma_h = par(np.full(4 * d_h, 0.1), "gamma_h")
        self.gamma_x = par(np.full(4 * d_h, 0.1), "gamma_x")
        self.gamma_c = par(np.full(d_h, 0.1), "gamma_c")
        self.beta_c = par(np.zeros(d_h), "beta_c")
        self.h0 = par(np.zeros(d_h), "h0")
        self.c0 = par(np.zeros(d_h), "c0")
        self.site_h = BNSiteStats(4 * d_h, momentum, eps, dtype)
        self.site_x = BNSiteStats(4 * d_h, momentum, eps, dtype)
        self.site_c = BNSiteStats(d_h, momentum, eps, dtype)

    def parameters(self):
        return [getattr(self, name) for name in self.FIELD_ORDER]

    def sites(self):
        return [self.site_h, self.site_x, self.site_c]


# -- single step ----------------------------------------------------------


def _cell_state(pre, c_prev, d):
    """c_t = sigmoid(f) * c_prev + sigmoid(i) * tanh(g), one tape node."""
    pv, cv = val(pre), val(c_prev)
    sf = expit(pv[:, :d])
    si = expit(pv[:, d:2 * d])
    tg = np.tanh(pv[:, 2 * d:3 * d])
    out_v = sf * cv + si * tg
    if not (isinstance(pre, Tensor) or isinstance(c_prev, Tensor)):
        return out_v

    def bwd(g):
        if isinstance(pre, Tensor):
            gp = ad._buf(pre)
            gp[:, :d] += g * cv * sf * (1.0 - sf)
            gp[:, d:2 * d] += g * tg * si * (1.0 - si)
            gp[:, 2 * d:3 * d] += g * si * (1.0 - tg * tg)
        if isinstance(c_prev, Tensor):
            ad._buf(c_prev)[...] += g * sf

    parents = tuple(x for x in (pre, c_prev) if isinstance(x, Tensor))
    return Tensor(out_v, parents, bwd)


def _cell_out(pre, bn_c, d):
    """h_t = sigmoid(o) * tanh(bn_c), one tape node."""
    pv, bv = val(pre), val(bn_c)
    so = expit(pv[:, 3 * d:])
    th = np.tanh(bv)
    out_v = so * th
    if not (isinstance(pre, Tensor) or isinstance(bn_c, Tensor)):
        return out_v

    def bwd(g):
        if isinstance(pre, Tensor):
            ad._buf(pre)[:, 3 * d:] += g * th * so * (1.0 - so)
        if isinstance(bn_c, Tensor):
            ad._buf(bn_c)[...] += g * so * (1.0 - th * th)

    parents = tuple(x for x in (pre, bn_c) if isinstance(x, Tensor))
    return Tensor(out_v, parents, bwd)


def bnlstm_cell_step(x_t, h_prev, c_prev, cell: BNLSTMCell, t: int,
                     mode: str, update_stats: bool = True):
    """Advance one cell by one timestep.

    Returns (h_t, c_t, (f, i, o)) with post-sigmoid gate values. In
    training mode the inputs may be tape tensors and gradients flow
    through the batch statistics; in inference mode plain arrays go in
    and come out.
    """
    if val(x_t).shape[-1] != cell.d_x or val(h_prev).shape[-1] != cell.d_h:
        raise ShapeMismatch(
            f"cell expects inputs of width {cell.d_x}/{cell.d_h}, got "
            f"{val(x_t).shape}/{val(h_prev).shape}")
    if mode == "infer":
        wh, wx = cell.W_h.value, cell.W_x.value
        gh, gx, bb = cell.gamma_h.value, cell.gamma_x.value, cell.b.value
        gc, bc = cell.gamma_c.value, cell.beta_c.value
    else:
        wh, wx = cell.W_h, cell.W_x
        gh, gx, bb = cell.gamma_h, cell.gamma_x, cell.b
        gc, bc = cell.gamma_c, cell.beta_c
    pre = bn2_add(ad.matmul(h_prev, wh), ad.matmul(x_t, wx),
                  gh, gx, bb, cell.site_h, cell.site_x, t, mode, update_stats)
    c_t = _cell_state(pre, c_prev, cell.d_h)
    bn_c = bn_transform(c_t, gc, bc, cell.site_c, t, mode, update_stats)
    h_t = _cell_out(pre, bn_c, cell.d_h)
    d = cell.d_h
    gates = (ad.sigmoid(ad.slice_cols(pre, 0, d)),
             ad.sigmoid(ad.slice_cols(pre, d, 2 * d)),
             ad.sigmoid(ad.slice_cols(pre, 3 * d, 4 * d)))
    return h_t, c_t, gates


# -- stacks ----------------------------------------------------------------


class EncoderStack:
    """Two full-rate layers, stride, a third layer, stride, the code layer."""

    def __init__(self, D, hidden_dims, rng, momentum, eps, dtype):
        dims_in = (D, *hidden_dims[:-1])
        self.cells = [
            BNLSTMCell(dx, dh, rng, momentum, eps, dtype, tag=f"enc{i + 1}")
            for i, (dx, dh) in enumerate(zip(dims_in, hidden_dims))
        ]
        self.L = hidden_dims[-1]


class DecoderStack:
    """The mirrored stack; its last hidden dimension equals D."""

    def __init__(self, D, enc_hidden_dims, rng, momentum, eps, dtype):
        hidden = (enc_hidden_dims[2], enc_hidden_dims[1],
                  enc_hidden_dims[0], D)
        dims_in = (enc_hidden_dims[-1], *hidden[:-1])
        self.cells = [
            BNLSTMCell(dx, dh, rng, momentum, eps, dtype, tag=f"dec{i + 1}")
            for i, (dx, dh) in enumerate(zip(dims_in, hidden))
        ]


class Autoencoder:
    def __init__(self, D, L, encoder, decoder, momentum, eps, dtype):
        self.D = D
        self.L = L
        self.encoder = encoder
        self.decoder = decoder
        self.momentum = momentum
        self.eps = eps
        self.dtype = np.dtype(dtype)
        self.max_input_len = 0  # longest feature sequence seen in training

    @property
    def cells(self):
        return self.encoder.cells + self.decoder.cells

    def parameters(self):
        return [p for cell in self.cells for p in cell.parameters()]


def build_model(D=1024, L=64, encoder_dims=(256, 256, 64), momentum=0.1,
                eps=1e-5, seed=0, dtype=np.float64) -> Autoencoder:
    """Construct a freshly initialized autoencoder.

    Weights are uniform(-k, k) with k = 1/sqrt(fan-in); the BN scales
    start at 0.1; biases, shifts and initial states start at zero.
    """
    rng = np.random.default_rng(seed)
    hidden = (*encoder_dims, L)
    enc = EncoderStack(D, hidden, rng, momentum, eps, dtype)
    dec = DecoderStack(D, hidden, rng, momentum, eps, dtype)
    return Autoencoder(D, L, enc, dec, momentum, eps, dtype)


def encoder_len(M: int) -> int:
    """Number of encoder output steps for an M-frame feature sequence."""
    return -(-(-(-M // 2)) // 2)  # ceil(ceil(M/2)/2)


@dataclass
class EncodeResult:
    """Encoder outputs for one video."""

    codes: np.ndarray     # (M_e, L) uint8 in {0, 1}
    d_series: np.ndarray  # (M_e - 1,) adjacent Hamming distances
    gates: tuple          # (f, i, o), each (M_e, L) post-sigmoid
    M_e: int


def _adjacent_hamming(codes: np.ndarray) -> np.ndarray:
    if len(codes) < 2:
        return np.zeros(0, dtype=np.int64)
    return (codes[1:] != codes[:-1]).sum(axis=1).astype(np.int64)


# -- dense single-video inference ------------------------------------------


def _infer_layer(cell: BNLSTMCell, X: np.ndarray) -> np.ndarray:
    """Run one cell over a (M, d_x) sequence with running statistics."""
    M = X.shape[0]
    d = cell.d_h
    mx = X @ cell.W_x.value
    h = cell.h0.value[None, :]
    c = cell.c0.value[None, :]
    out = np.empty((M, d), dtype=X.dtype)
    gh, gx, bb = cell.gamma_h.value, cell.gamma_x.value, cell.b.value
    for t in range(1, M + 1):
        pre = bn2_add(h @ cell.W_h.value, mx[t - 1:t], gh, gx, bb,
                      cell.site_h, cell.site_x, t, "infer")
        c = _cell_state(pre, c, d)
        bn_c = bn_transform(c, cell.gamma_c.value, cell.beta_c.value,
                            cell.site_c, t, "infer")
        h = _cell_out(pre, bn_c, d)
        out[t - 1] = h[0]
    return out


def _infer_layer_with_gates(cell: BNLSTMCell, X: np.ndarray):
    M = X.shape[0]
    d = cell.d_h
    mx = X @ cell.W_x.value
    h = cell.h0.value[None, :]
    c = cell.c0.value[None, :]
    out = np.empty((M, d), dtype=X.dtype)
    fio = tuple(np.empty((M, d), dtype=X.dtype) for _ in range(3))
    gh, gx, bb = cell.gamma_h.value, cell.gamma_x.value, cell.b.value
    for t in range(1, M + 1):
        pre = bn2_add(h @ cell.W_h.value, mx[t - 1:t], gh, gx, bb,
                      cell.site_h, cell.site_x, t, "infer")
        sig = expit(pre[0])
        fio[0][t - 1] = sig[:d]
        fio[1][t - 1] = sig[d:2 * d]
        fio[2][t - 1] = sig[3 * d:]
        c = _cell_state(pre, c, d)
        bn_c = bn_transform(c, cell.gamma_c.value, cell.beta_c.value,
                            cell.site_c, t, "infer")
        h = _cell_out(pre, bn_c, d)
        out[t - 1] = h[0]
    return out, fio


def _stride_dense(X: np.ndarray) -> np.ndarray:
    """Keep 1-based even steps, plus the last step when the length is odd."""
    M = X.shape[0]
    idx = list(range(1, M, 2))
    if M % 2 == 1:
        idx.append(M - 1)
    return X[idx]


def _upsample_dense(X: np.ndarray) -> np.ndarray:
    """Double the length; inserted steps average their flanking steps."""
    n, d = X.shape
    out = np.empty((2 * n, d), dtype=X.dtype)
    out[0::2] = X
    out[1:2 * n - 1:2] = 0.5 * (X[:-1] + X[1:])
    out[2 * n - 1] = X[-1]
    return out


def _encoder_hidden_infer(model: Autoencoder, X: np.ndarray):
    """Layer-4 hidden states (M_e, L) and gate records, running stats."""
    e1, e2, e3, e4 = model.encoder.cells
    X = _infer_layer(e1, X)
    X = _infer_layer(e2, X)
    X = _infer_layer(e3, _stride_dense(X))
    return _infer_layer_with_gates(e4, _stride_dense(X))


def encode(seq: FeatureSequence, model: Autoencoder,
           mode: str = "infer") -> EncodeResult:
    """Encode one feature sequence into binary codes.

    The gate record comes from the last encoder layer; d_series[t] is the
    Hamming distance between codes t+1 and t.
    """
    if seq.M < 1:
        raise EmptySequence(f"{seq.video_id}: empty feature sequence")
    if not seq.normalized:
        raise ValueError(f"{seq.video_id}: encode expects normalized features")
    if seq.D != model.D:
        raise ShapeMismatch(f"features D={seq.D}, model D={model.D}")
    if mode == "train":
        fwd = forward_batch_train([seq], model, update_stats=False)
        return fwd.encode_results()[0]
    X = seq.features.astype(model.dtype)
    hidden, fio = _encoder_hidden_infer(model, X)
    pre_bin = np.arctanh(
        np.clip(hidden, -1 + ARCTANH_MARGIN, 1 - ARCTANH_MARGIN))
    codes = (pre_bin >= 0).astype(np.uint8)
    return EncodeResult(codes=codes, d_series=_adjacent_hamming(codes),
                        gates=fio, M_e=codes.shape[0])


def decode(codes: EncodeResult, model: Autoencoder, target_len: int,
           mode: str = "infer") -> np.ndarray:
    """Reconstruct (target_len, D) features from binary codes."""
    if codes.M_e < 1:
        raise EmptyCodes("no codes to decode")
    if mode != "infer":
        raise ValueError("training-mode decoding runs through the trainer")
    X = (codes.codes.astype(model.dtype) * 2.0 - 1.0)
    d1, d2, d3, d4 = model.decoder.cells
    X = _upsample_dense(_infer_layer(d1, X))
    X = _upsample_dense(_infer_layer(d2, X))
    X = _infer_layer(d4, _infer_layer(d3, X))
    out = np.arctanh(np.clip(X, -1 + ARCTANH_MARGIN, 1 - ARCTANH_MARGIN))
    if len(out) >= target_len:
        return out[:target_len]
    pad = np.repeat(out[-1:], target_len - len(out), axis=0)
    return np.concatenate([out, pad], axis=0)


def forward(seq: FeatureSequence, model: Autoencoder,
            mode: str = "infer"):
    """Encode then decode back to the input length."""
    if mode == "train":
        fwd = forward_batch_train([seq], model, update_stats=False)
        return fwd.reconstructions()[0], fwd.encode_results()[0]
    enc = encode(seq, model, mode)
    return decode(enc, model, seq.M, mode), enc


# -- ragged training forward ------------------------------------------------


def _counts(lengths: np.ndarray) -> np.ndarray:
    """counts[t-1] = how many items are still active at 1-based step t."""
    T = int(lengths[0])
    return np.array([int(np.sum(lengths >= t)) for t in range(1, T + 1)])


def _run_layer_train(cell, steps, lengths, update_stats, want_gates=False):
    counts = _counts(lengths)
    h = ad.broadcast_rows(cell.h0, counts[0])
    c = ad.broadcast_rows(cell.c0, counts[0])
    outs = []
    gates = []
    d = cell.d_h
    for t in range(1, len(counts) + 1):
        bt = counts[t - 1]
        if val(h).shape[0] > bt:
            h = ad.slice_rows(h, 0, bt)
            c = ad.slice_rows(c, 0, bt)
        pre = bn2_add(ad.matmul(h, cell.W_h), ad.matmul(steps[t - 1], cell.W_x),
                      cell.gamma_h, cell.gamma_x, cell.b,
                      cell.site_h, cell.site_x, t, "train", update_stats)
        c = _cell_state(pre, c, d)
        bn_c = bn_transform(c, cell.gamma_c, cell.beta_c, cell.site_c, t,
                            "train", update_stats)
        h = _cell_out(pre, bn_c, d)
        if want_gates:
            gates.append((ad.sigmoid(ad.slice_cols(pre, 0, d)),
                          ad.sigmoid(ad.slice_cols(pre, d, 2 * d)),
                          ad.sigmoid(ad.slice_cols(pre, 3 * d, 4 * d))))
        outs.append(h)
    return outs, gates


def _stride_ragged(steps, lengths):
    new_lengths = -(-lengths // 2)
    new_steps = []
    for k in range(1, int(new_lengths[0]) + 1):
        n_even = int(np.sum(lengths >= 2 * k))
        n_all = int(np.sum(new_lengths >= k))
        even_src = steps[2 * k - 1] if n_even > 0 else None
        if n_all == n_even:
            if val(even_src).shape[0] == n_even:
                new_steps.append(even_src)
            else:
                new_steps.append(ad.slice_rows(even_src, 0, n_even))
        else:
            # items of odd length 2k-1 contribute their final step
            parts = []
            if n_even > 0:
                parts.append((even_src, 0, n_even))
            parts.append((steps[2 * k - 2], n_even, n_all))
            new_steps.append(ad.rowcat(parts))
    return new_steps, new_lengths


def _upsample_ragged(steps, lengths):
    new_lengths = lengths * 2
    new_steps = []
    for k in range(1, len(steps) + 1):
        sk = steps[k - 1]
        new_steps.append(sk)  # odd output step 2k-1
        m_pair = int(np.sum(lengths >= k + 1))
        m_all = val(sk).shape[0]
        if m_pair == 0:
            new_steps.append(sk)  # boundary: replicate
            continue
        left = ad.slice_rows(sk, 0, m_pair) if m_pair < m_all else sk
        avg = ad.scale(ad.add(left, steps[k]), 0.5)
        if m_pair < m_all:
            new_steps.append(ad.rowcat([(avg, 0, m_pair),
                                        (sk, m_pair, m_all)]))
        else:
            new_steps.append(avg)
    return new_steps, new_lengths


class BatchForward:
    """Tape handles and lengths from one training-mode batch forward.

    Items are ordered by decreasing length; per-step tensors cover the
    items still active at that step (always a prefix of that order).
    """

    def __init__(self, model, in_lengths, code_steps, gate_steps,
                 recon_steps, enc_lengths, dec_lengths, prebin_steps=()):
        self.model = model
        self.in_lengths = in_lengths
        self.code_steps = code_steps
        self.gate_steps = gate_steps
        self.recon_steps = recon_steps
        self.enc_lengths = enc_lengths
        self.dec_lengths = dec_lengths
        self.prebin_steps = prebin_steps  # arctanh outputs feeding the sign

    def item_codes(self, i: int) -> np.ndarray:
        """{0,1} codes of item i, shape (M_e_i, L)."""
        me = int(self.enc_lengths[i])
        rows = [val(self.code_steps[t])[i] for t in range(me)]
        return ((np.stack(rows) + 1) / 2).astype(np.uint8)

    def encode_results(self):
        out = []
        for i in range(len(self.in_lengths)):
            codes = self.item_codes(i)
            me = codes.shape[0]
            fio = tuple(
                np.stack([val(self.gate_steps[t][j])[i] for t in range(me)])
                for j in range(3))
            out.append(EncodeResult(codes=codes,
                                    d_series=_adjacent_hamming(codes),
                                    gates=fio, M_e=me))
        return out

    def reconstructions(self):
        out = []
        for i in range(len(self.in_lengths)):
            m = int(self.in_lengths[i])
            rows = [val(self.recon_steps[t])[i] for t in range(m)]
            out.append(np.stack(rows))
        return out


def prepare_inputs(seqs: list[FeatureSequence], dtype) -> list[np.ndarray]:
    """Time-major per-step input rows for a ragged batch (cacheable)."""
    lengths = np.array([s.M for s in seqs], dtype=np.int64)
    counts = _counts(lengths)
    return [np.ascontiguousarray(
        np.stack([seqs[i].features[t - 1] for i in range(counts[t - 1])]),
        dtype=dtype) for t in range(1, int(lengths[0]) + 1)]


def forward_batch_train(seqs: list[FeatureSequence], model: Autoencoder,
                        update_stats: bool = True,
                        binarize: str = "hard",
                        input_steps: list[np.ndarray] | None = None) -> BatchForward:
    """Training-mode forward over a ragged batch, on the tape.

    ``seqs`` must be sorted by decreasing length. Reconstruction steps
    may overshoot an item's length; the losses ignore the overshoot,
    which realizes the cut-to-M contract.

    ``binarize="surrogate"`` swaps the hard sign for its clipped-identity
    surrogate (same gradient), making the whole loss finite-difference
    checkable; production training uses the default hard codes.
    """
    if any(s.M < 1 for s in seqs):
        raise EmptySequence("empty feature sequence in batch")
    lengths = np.array([s.M for s in seqs], dtype=np.int64)
    if np.any(lengths[:-1] < lengths[1:]):
        raise ValueError("batch items must be sorted by decreasing length")
    steps = input_steps if input_steps is not None \
        else prepare_inputs(seqs, model.dtype)

    e1, e2, e3, e4 = model.encoder.cells
    s, _ = _run_layer_train(e1, steps, lengths, update_stats)
    s, _ = _run_layer_train(e2, s, lengths, update_stats)
    s, len3 = _stride_ragged(s, lengths)
    s, _ = _run_layer_train(e3, s, len3, update_stats)
    s, len4 = _stride_ragged(s, len3)
    hid, gates = _run_layer_train(e4, s, len4, update_stats, want_gates=True)
    prebin = [ad.arctanh_clamped(h, ARCTANH_MARGIN) for h in hid]
    binfun = sgn_ste if binarize == "hard" else sgn_surrogate
    codes = [binfun(p) for p in prebin]

    d1, d2, d3, d4 = model.decoder.cells
    s, _ = _run_layer_train(d1, codes, len4, update_stats)
    s, lu1 = _upsample_ragged(s, len4)
    s, _ = _run_layer_train(d2, s, lu1, update_stats)
    s, lu2 = _upsample_ragged(s, lu1)
    s, _ = _run_layer_train(d3, s, lu2, update_stats)
    s, _ = _run_layer_train(d4, s, lu2, update_stats)
    recon = [ad.arctanh_clamped(h, ARCTANH_MARGIN) for h in s]

    model.max_input_len = max(model.max_input_len, int(lengths[0]))
    return BatchForward(model, lengths, codes, gates, recon, len4, lu2,
                        prebin_steps=prebin)


# -- checkpoints -------------------------------------------------------------

_MCBN_HEADER = struct.Struct("<4sBB")
_MCBN_META = struct.Struct("<IIffI")


def _write_site(f, site: BNSiteStats):
    f.write(struct.pack("<I", site.max_train_timestep))
    for mean, var in zip(site.means, site.vars):
        f.write(mean.astype("<f4").tobytes())
        f.write(var.astype("<f4").tobytes())


def save_model(model: Autoencoder, path) -> None:
    with open(path, "wb") as f:
        f.write(_MCBN_HEADER.pack(b"MCBN", 1, len(model.cells)))
        for cell in model.cells:
            f.write(struct.pack("<II", cell.d_x, cell.d_h))
            for p in cell.parameters():
                f.write(p.value.astype("<f4").tobytes())
            for site in cell.sites():
                _write_site(f, site)
        f.write(_MCBN_META.pack(model.D, model.L, model.momentum,
                                model.eps, model.max_input_len))


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TruncatedFile(f"{self.path}: checkpoint payload is short")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def floats(self, n, dtype):
        return np.frombuffer(self.take(4 * n), dtype="<f4").astype(dtype)


_DIMS = struct.Struct("<II")
_COUNT = struct.Struct("<I")


def load_model(path, dtype=np.float64) -> Autoencoder:
    """Rebuild an autoencoder from an MCBN checkpoint.

    save(load(f)) reproduces f byte for byte: values are stored as
    float32 and upcasting is exact.
    """
    r = _Reader(Path(path).read_bytes(), path)
    magic, version, n_layers = r.unpack(_MCBN_HEADER)
    if magic != b"MCBN":
        raise BadMagic(f"{path}: expected MCBN, found {magic!r}")
    if version != 1:
        raise UnsupportedVersion(f"{path}: MCBN version {version}")
    if n_layers % 2 != 0:
        raise TruncatedFile(f"{path}: odd layer count {n_layers}")

    rng = np.random.default_rng(0)
    cells = []
    for i in range(n_layers):
        d_x, d_h = r.unpack(_DIMS)
        cell = BNLSTMCell(d_x, d_h, rng, dtype=dtype,
                          tag=f"layer{i + 1}")
        for p in cell.parameters():
            p.value = r.floats(p.value.size, dtype).reshape(p.value.shape)
            p.grad = np.zeros_like(p.value)
            p.m = np.zeros_like(p.value)
            p.v = np.zeros_like(p.value)
        for site in cell.sites():
            (n_t,) = r.unpack(_COUNT)
            site.dtype = np.dtype(dtype)
            site.means = []
            site.vars = []
            for _ in range(n_t):
                site.means.append(r.floats(site.dim, dtype))
                site.vars.append(r.floats(site.dim, dtype))
        cells.append(cell)
    D, L, momentum, eps, max_len = r.unpack(_MCBN_META)

    half = n_layers // 2
    enc = EncoderStack.__new__(EncoderStack)
    enc.cells = cells[:half]
    enc.L = L
    dec = DecoderStack.__new__(DecoderStack)
    dec.cells = cells[half:]
    for i, cell in enumerate(cells):
        cell_tag = f"enc{i + 1}" if i < half else f"dec{i - half + 1}"
        for name in cell.FIELD_ORDER:
            getattr(cell, name).name = f"{cell_tag}.{name}"
        for site in cell.sites():
            site.momentum = float(np.float32(momentum))
            site.eps = float(np.float32(eps))
    model = Autoencoder(D, L, enc, dec, float(np.float32(momentum)),
                        float(np.float32(eps)), dtype)
    model.max_input_len = max_len
    return model
